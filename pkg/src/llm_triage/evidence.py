"""Evidence records: SHA-256 digests, findings, and the chain-of-custody log.

Custody entries are hash-chained. Each entry's hash covers the UTF-8 text::

    seq \\n timestamp \\n actor \\n action \\n item_digest \\n prev_hash

with the timestamp rendered as RFC 3339 UTC at millisecond precision and the
digests as lowercase hex. The first entry chains to 32 zero bytes.

On disk the log is JSONL, one compact record per line. A line only counts as
intact when re-serialising the parsed record reproduces it byte for byte, so
any edit to the file surfaces as a break at that line.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
from collections.abc import Callable, Sequence
from datetime import UTC, datetime
from enum import StrEnum
from pathlib import Path
from typing import IO, Any, ClassVar

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_serializer,
    field_validator,
    model_serializer,
    model_validator,
)

from llm_triage import config
from llm_triage.errors import TriageError
from llm_triage.timestamps import rfc3339_ms, truncate_ms

log = logging.getLogger(__name__)

_HEX_RE = re.compile(r"[0-9a-f]{64}")


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class HashReadError(TriageError):
    """The input failed mid-read; ``bytes_consumed`` were hashed before it."""

    def __init__(self, bytes_consumed: int, cause: BaseException | None = None) -> None:
        super().__init__(f"read failed after {bytes_consumed} bytes: {cause}")
        self.bytes_consumed = bytes_consumed


class CustodyChainError(TriageError):
    """A custody log failed verification at ``broken_index``."""

    def __init__(self, broken_index: int) -> None:
        super().__init__(f"custody chain broken at entry {broken_index}")
        self.broken_index = broken_index


# ---------------------------------------------------------------------------
# Digest
# ---------------------------------------------------------------------------


class Digest(BaseModel):
    """A SHA-256 value. Serialises as its lowercase hex string."""

    model_config = ConfigDict(frozen=True)

    algorithm: ClassVar[str] = "sha256"
    value: bytes

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        if isinstance(data, str):
            if not _HEX_RE.fullmatch(data):
                raise ValueError("digest must be 64 lowercase hex characters")
            return {"value": bytes.fromhex(data)}
        if isinstance(data, bytes | bytearray):
            return {"value": bytes(data)}
        return data

    @field_validator("value")
    @classmethod
    def _check_length(cls, v: bytes) -> bytes:
        if len(v) != 32:
            raise ValueError(f"sha256 digest must be 32 bytes, got {len(v)}")
        return v

    @model_serializer
    def _as_hex(self) -> str:
        return self.value.hex()

    @property
    def hex(self) -> str:
        return self.value.hex()

    @classmethod
    def from_hex(cls, text: str) -> Digest:
        return cls.model_validate(text)

    @classmethod
    def of(cls, data: bytes) -> Digest:
        return cls(value=hashlib.sha256(data).digest())

    def __str__(self) -> str:
        return self.hex


ZERO_DIGEST = Digest(value=bytes(32))


def hash_stream(stream: IO[bytes], chunk_size: int | None = None) -> Digest:
    """SHA-256 of everything remaining in ``stream``."""
    size = chunk_size or config.HASH_CHUNK_SIZE
    h = hashlib.sha256()
    consumed = 0
    while True:
        try:
            block = stream.read(size)
        except OSError as exc:
            raise HashReadError(consumed, exc) from exc
        if not block:
            break
        h.update(block)
        consumed += len(block)
    return Digest(value=h.digest())


def hash_file(path: Path, chunk_size: int | None = None) -> Digest:
    with path.open("rb") as f:
        return hash_stream(f, chunk_size)


# ---------------------------------------------------------------------------
# Findings
# ---------------------------------------------------------------------------


class FindingStatus(StrEnum):
    PARSED = "Parsed"
    PRESENT_UNPARSED = "PresentUnparsed"
    CORRUPT = "Corrupt"


class FsTimes(BaseModel):
    modified: datetime
    accessed: datetime | None = None
    created: datetime | None = None


class Finding(BaseModel):
    """One artifact instance recovered from the scanned root.

    ``resolved_path`` is the path inside the evidence (POSIX spelling,
    rooted at the scanned root). ``digest`` is absent when the file could not
    be read, or when hashing was skipped for a bulk artifact (see
    ``ScanOptions.hash_bulk``).
    """

    descriptor_id: str
    resolved_path: str
    size: int
    digest: Digest | None
    fs_times: FsTimes | None = None
    payload_ref: str | None = None
    status: FindingStatus

    @model_validator(mode="after")
    def _parsed_has_payload(self) -> Finding:
        if (self.status is FindingStatus.PARSED) != (self.payload_ref is not None):
            raise ValueError("status Parsed requires a payload_ref and vice versa")
        return self


# ---------------------------------------------------------------------------
# Chain of custody
# ---------------------------------------------------------------------------


def canonical_entry_bytes(
    seq: int,
    timestamp: datetime,
    actor: str,
    action: str,
    item_digest: Digest,
    prev_hash: Digest,
) -> bytes:
    fields = [str(seq), rfc3339_ms(timestamp), actor, action, item_digest.hex, prev_hash.hex]
    return "\n".join(fields).encode("utf-8")


class CustodyEntry(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    seq: int = Field(ge=0)
    timestamp: datetime
    actor: str
    action: str
    item_digest: Digest
    prev_hash: Digest
    entry_hash: Digest

    @field_serializer("timestamp")
    def _ts(self, ts: datetime) -> str:
        return rfc3339_ms(ts)

    def expected_hash(self) -> Digest:
        return Digest.of(
            canonical_entry_bytes(
                self.seq, self.timestamp, self.actor, self.action, self.item_digest, self.prev_hash
            )
        )

    def to_line(self) -> str:
        return self.model_dump_json()


def _new_entry(
    seq: int,
    prev_hash: Digest,
    actor: str,
    action: str,
    item_digest: Digest,
    timestamp: datetime | None,
) -> CustodyEntry:
    ts = truncate_ms((timestamp or datetime.now(UTC)).astimezone(UTC))
    entry_hash = Digest.of(canonical_entry_bytes(seq, ts, actor, action, item_digest, prev_hash))
    return CustodyEntry(
        seq=seq,
        timestamp=ts,
        actor=actor,
        action=action,
        item_digest=item_digest,
        prev_hash=prev_hash,
        entry_hash=entry_hash,
    )


def custody_verify(entries: Sequence[CustodyEntry]) -> int | None:
    """Index of the earliest broken entry, or ``None`` when the chain holds."""
    prev = ZERO_DIGEST
    for i, entry in enumerate(entries):
        if entry.seq != i or entry.prev_hash != prev or entry.expected_hash() != entry.entry_hash:
            return i
        prev = entry.entry_hash
    return None


def custody_append(
    entries: Sequence[CustodyEntry],
    actor: str,
    action: str,
    item_digest: Digest,
    *,
    timestamp: datetime | None = None,
) -> CustodyEntry:
    """Build the next entry for ``entries``. The caller persists it.

    Raises :class:`CustodyChainError` if ``entries`` does not verify.
    """
    broken = custody_verify(entries)
    if broken is not None:
        raise CustodyChainError(broken)
    prev = entries[-1].entry_hash if entries else ZERO_DIGEST
    return _new_entry(len(entries), prev, actor, action, item_digest, timestamp)


def parse_custody_log(data: bytes) -> tuple[list[CustodyEntry], int | None]:
    """Parse JSONL custody bytes.

    Returns the entries read before the first unreadable line, plus that
    line's index (``None`` when every line parsed and re-serialised exactly).
    """
    lines = data.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    entries: list[CustodyEntry] = []
    for i, raw in enumerate(lines):
        try:
            line = raw.decode("utf-8")
            entry = CustodyEntry.model_validate(json.loads(line))
        except (UnicodeDecodeError, ValueError, ValidationError):
            return entries, i
        if entry.to_line() != line:
            return entries, i
        entries.append(entry)
    return entries, None


def verify_custody_bytes(data: bytes) -> int | None:
    entries, parse_break = parse_custody_log(data)
    chain_break = custody_verify(entries)
    breaks = [b for b in (parse_break, chain_break) if b is not None]
    return min(breaks) if breaks else None


def verify_custody_file(path: Path) -> int | None:
    return verify_custody_bytes(path.read_bytes())


class CustodyLog:
    """Single-writer custody log, optionally mirrored to a JSONL file.

    Appends are serialised with a lock. An existing file is verified when
    the log is opened and the chain continues from its last entry.
    """

    def __init__(
        self,
        path: Path | None = None,
        *,
        actor: str | None = None,
        clock: Callable[[], datetime] | None = None,
    ) -> None:
        self.path = path
        self.actor = actor or config.CUSTODY_ACTOR
        self._clock = clock
        self._lock = threading.Lock()
        self.entries: list[CustodyEntry] = []
        if path is not None and path.exists():
            data = path.read_bytes()
            broken = verify_custody_bytes(data)
            if broken is not None:
                raise CustodyChainError(broken)
            self.entries, _ = parse_custody_log(data)
            log.info("custody: continuing %s at seq %d", path, len(self.entries))

    @property
    def head(self) -> Digest:
        return self.entries[-1].entry_hash if self.entries else ZERO_DIGEST

    def append(self, action: str, item_digest: Digest) -> CustodyEntry:
        with self._lock:
            timestamp = self._clock() if self._clock else None
            entry = _new_entry(
                len(self.entries), self.head, self.actor, action, item_digest, timestamp
            )
            if self.path is not None:
                with self.path.open("a", encoding="utf-8", newline="\n") as f:
                    f.write(entry.to_line() + "\n")
            self.entries.append(entry)
            return entry
