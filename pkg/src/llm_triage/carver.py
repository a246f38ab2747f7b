"""Signature carving over raw images and string search over memory dumps.

Both scans stream the input in ``config.CARVE_BLOCK_SIZE`` blocks. The GGUF
scan carries the last three bytes of each block into the next so a magic
straddling a boundary is still seen; the string scan carries the trailing
printable run instead. Peak memory is one block plus the carry.
"""

from __future__ import annotations

import hashlib
import heapq
import logging
import re
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass
from enum import StrEnum
from typing import IO

from pydantic import BaseModel

from llm_triage import config
from llm_triage.analyzers.gguf import (
    MAGIC,
    GgufError,
    GgufHeader,
    ModelFingerprint,
    fingerprint,
    parse_metadata,
)
from llm_triage.errors import TriageError
from llm_triage.evidence import Digest

log = logging.getLogger(__name__)

SECTOR = 512
CONTEXT_CHARS = 256
# Characters of raw surroundings kept on each side of a string hit.
CONTEXT_PAD = 32
# A printable run longer than this is cut rather than carried further.
MAX_CARRY = 1024 * 1024

_PRINTABLE = bytes(range(0x20, 0x7F)) + b"\t"
_ASCII_CLASS = rb"[\x20-\x7e\t]"


class CarveHit(BaseModel):
    offset: int
    header: GgufHeader | None = None
    fingerprint: ModelFingerprint | None = None
    parse_ok: bool
    error: str | None = None


class CarveReadError(TriageError):
    """The stream failed at ``offset``; ``hits`` were found before that."""

    def __init__(self, offset: int, hits: list[CarveHit], cause: BaseException) -> None:
        super().__init__(f"read failed at offset {offset}: {cause}")
        self.offset = offset
        self.hits = hits


# ---------------------------------------------------------------------------
# GGUF carving
# ---------------------------------------------------------------------------


def _scan_magic(stream: IO[bytes], aligned: bool, block: int) -> Iterator[int]:
    tail = b""
    base = 0  # absolute offset of buf[0]
    while True:
        try:
            chunk = stream.read(block)
        except OSError as exc:
            raise _ScanFailed(base + len(tail), exc) from exc
        if not chunk:
            return
        buf = tail + chunk
        idx = buf.find(MAGIC)
        while idx != -1:
            offset = base + idx
            if not aligned or offset % SECTOR == 0:
                yield offset
            idx = buf.find(MAGIC, idx + 1)
        keep = min(len(MAGIC) - 1, len(buf))
        tail = buf[len(buf) - keep :]
        base += len(buf) - keep


class _ScanFailed(Exception):
    def __init__(self, offset: int, cause: BaseException) -> None:
        super().__init__(offset)
        self.offset = offset
        self.cause = cause


def _parse_at(stream: IO[bytes], offset: int) -> CarveHit:
    try:
        stream.seek(offset)
        metadata = parse_metadata(stream)
        stream.seek(offset)
        raw = stream.read(metadata.metadata_size)
    except GgufError as exc:
        return CarveHit(offset=offset, parse_ok=False, error=str(exc))
    digest = Digest(value=hashlib.sha256(raw).digest())
    return CarveHit(
        offset=offset,
        header=metadata.header,
        fingerprint=fingerprint(metadata, digest),
        parse_ok=True,
    )


def carve_gguf(
    stream: IO[bytes], *, aligned: bool = False, block: int | None = None
) -> list[CarveHit]:
    """Every GGUF magic in ``stream`` with a bounded metadata parse at each.

    ``aligned`` keeps only sector-aligned (512-byte) candidates. A hit's
    fingerprint digest covers the header and metadata bytes, not the
    (possibly fragmented) tensor data. Hits come back in ascending offset.
    """
    size = block or config.CARVE_BLOCK_SIZE
    if size <= 0:
        raise ValueError(f"block size must be positive, got {size}")
    stream.seek(0)
    offsets: list[int] = []
    failure: _ScanFailed | None = None
    try:
        offsets.extend(_scan_magic(stream, aligned, size))
    except _ScanFailed as exc:
        failure = exc
    hits = [_parse_at(stream, offset) for offset in offsets]
    log.info("carve: %d GGUF magic hit(s), %d parsed", len(hits), sum(h.parse_ok for h in hits))
    if failure is not None:
        raise CarveReadError(failure.offset, hits, failure.cause)
    return hits


# ---------------------------------------------------------------------------
# Strings
# ---------------------------------------------------------------------------


class StringEncoding(StrEnum):
    ASCII = "ASCII"
    UTF16LE = "UTF16LE"


class StringHit(BaseModel):
    offset: int
    encoding: StringEncoding
    text: str
    # Bytes around the run with non-printables shown as ".", the run itself
    # clipped to CONTEXT_CHARS.
    context: str
    keyword: str | None = None


def _render(raw: bytes, width: int) -> str:
    text = raw.decode("latin-1") if width == 1 else raw.decode("utf-16-le", errors="replace")
    return "".join(c if " " <= c <= "~" else "." for c in text)


@dataclass
class _RunScanner:
    """Maximal printable runs for one encoding across successive blocks."""

    encoding: StringEncoding
    min_len: int
    carry: bytes = b""
    carry_start: int = 0
    # Up to CONTEXT_PAD characters of input just before ``carry``.
    history: bytes = b""

    def __post_init__(self) -> None:
        if self.encoding is StringEncoding.ASCII:
            self._run = re.compile(_ASCII_CLASS + rb"{%d,}" % self.min_len)
            self._width = 1
        else:
            self._run = re.compile(rb"(?:" + _ASCII_CLASS + rb"\x00){%d,}" % self.min_len)
            self._width = 2

    @property
    def watermark(self) -> int:
        """No future hit starts before this offset."""
        return self.carry_start

    def _trailing_run_start(self, buf: bytes) -> int:
        if self._width == 1:
            return len(buf.rstrip(_PRINTABLE))
        # Walk back over (char, NUL) pairs; a final lone printable byte may
        # still get its NUL in the next block.
        i = len(buf)
        if i and buf[i - 1] in _PRINTABLE:
            i -= 1
        while i >= 2 and buf[i - 1] == 0 and buf[i - 2] in _PRINTABLE:
            i -= 2
        return i

    def _decode(self, raw: bytes) -> str:
        return raw.decode("ascii") if self._width == 1 else raw.decode("utf-16-le")

    def feed(self, chunk: bytes, *, final: bool = False) -> list[StringHit]:
        buf = self.carry + chunk
        base = self.carry_start
        cut = len(buf) if final else self._trailing_run_start(buf)
        if len(buf) - cut > MAX_CARRY:
            cut = len(buf)
        hits = []
        for m in self._run.finditer(buf, 0, cut):
            text = self._decode(m.group())
            hits.append(
                StringHit(
                    offset=base + m.start(),
                    encoding=self.encoding,
                    text=text,
                    context=self._context(buf, m.start(), m.end(), text),
                )
            )
        pad = CONTEXT_PAD * self._width
        self.history = (self.history + buf[:cut])[-pad:]
        self.carry = buf[cut:]
        self.carry_start = base + cut
        return hits

    def _context(self, buf: bytes, start: int, end: int, text: str) -> str:
        """Surroundings of ``buf[start:end]``; the trailing side stops at the block end."""
        pad = CONTEXT_PAD * self._width
        before = (self.history + buf[:start])[-pad:]
        before = before[len(before) % self._width :]
        if len(text) > CONTEXT_CHARS:
            return _render(before, self._width) + text[:CONTEXT_CHARS]
        after = buf[end : end + pad]
        after = after[: len(after) - len(after) % self._width]
        return _render(before, self._width) + text + _render(after, self._width)


def extract_strings(
    stream: IO[bytes],
    min_len: int | None = None,
    encodings: Iterable[StringEncoding] = (StringEncoding.ASCII, StringEncoding.UTF16LE),
    *,
    block: int | None = None,
) -> Iterator[StringHit]:
    """Maximal printable runs of at least ``min_len`` characters, ascending by offset."""
    length = min_len if min_len is not None else config.STRING_MIN_LEN
    if length <= 0:
        raise ValueError(f"min_len must be positive, got {length}")
    size = block or config.CARVE_BLOCK_SIZE
    scanners = [_RunScanner(encoding, length) for encoding in dict.fromkeys(encodings)]
    if not scanners:
        return
    pending: list[tuple[int, int, StringHit]] = []
    seq = 0
    while True:
        chunk = stream.read(size)
        final = not chunk
        for scanner in scanners:
            for hit in scanner.feed(chunk, final=final):
                heapq.heappush(pending, (hit.offset, seq, hit))
                seq += 1
        watermark = min(s.watermark for s in scanners)
        while pending and (final or pending[0][0] < watermark):
            yield heapq.heappop(pending)[2]
        if final:
            return


def _window(text: str, start: int, length: int) -> str:
    """At most CONTEXT_CHARS characters of ``text`` centred on ``text[start:start+length]``."""
    if len(text) <= CONTEXT_CHARS:
        return text
    pad = max(0, (CONTEXT_CHARS - length) // 2)
    lo = max(0, min(start - pad, len(text) - CONTEXT_CHARS))
    return text[lo : lo + CONTEXT_CHARS]


def keyword_search(
    stream: IO[bytes],
    keywords: Sequence[str],
    *,
    case_sensitive: bool = True,
    min_len: int | None = None,
    block: int | None = None,
) -> list[StringHit]:
    """String hits (both encodings) whose text contains any of ``keywords``.

    ``keyword`` on each hit names the first keyword found in it and
    ``context`` is a window around that occurrence.
    """
    needles = [k for k in keywords if k]
    if not needles:
        raise ValueError("keyword_search needs at least one non-empty keyword")
    length = min(min_len if min_len is not None else config.STRING_MIN_LEN, *map(len, needles))
    folded = needles if case_sensitive else [k.casefold() for k in needles]
    hits: list[StringHit] = []
    for hit in extract_strings(stream, length, block=block):
        haystack = hit.text if case_sensitive else hit.text.casefold()
        for keyword, needle in zip(needles, folded, strict=True):
            pos = haystack.find(needle)
            if pos != -1:
                hits.append(
                    hit.model_copy(
                        update={"keyword": keyword, "context": _window(hit.text, pos, len(needle))}
                    )
                )
                break
    log.info("memscan: %d hit(s) for %d keyword(s)", len(hits), len(needles))
    return hits
