"""Tests for digests, findings and the hash-chained custody log."""

from __future__ import annotations

import hashlib
import io
from collections.abc import Callable
from datetime import UTC, datetime, timedelta
from pathlib import Path

import pytest
from pydantic import ValidationError

from llm_triage.evidence import (
    ZERO_DIGEST,
    CustodyChainError,
    CustodyLog,
    Digest,
    Finding,
    FindingStatus,
    HashReadError,
    custody_append,
    custody_verify,
    hash_file,
    hash_stream,
    parse_custody_log,
    verify_custody_bytes,
    verify_custody_file,
)

T0 = datetime(2025, 8, 29, 10, tzinfo=UTC)


def _ticking_clock() -> Callable[[], datetime]:
    ticks = iter(range(1000))

    def clock() -> datetime:
        return T0 + timedelta(seconds=next(ticks))

    return clock


class _FailingStream(io.RawIOBase):
    """Yields ``good`` bytes, then raises on the next read."""

    def __init__(self, good: bytes) -> None:
        self._good = good

    def readable(self) -> bool:
        return True

    def read(self, size: int = -1) -> bytes:
        if self._good:
            out, self._good = self._good[:size], self._good[size:]
            return out
        raise OSError("I/O error")


# ---------------------------------------------------------------------------
# Digest / hashing
# ---------------------------------------------------------------------------


class TestDigest:
    def test_serialises_as_hex(self) -> None:
        d = Digest.of(b"abc")
        assert d.model_dump() == hashlib.sha256(b"abc").hexdigest()
        assert Digest.from_hex(d.hex) == d

    def test_rejects_bad_hex(self) -> None:
        with pytest.raises(ValidationError):
            Digest.from_hex("ABC")

    def test_rejects_wrong_length(self) -> None:
        with pytest.raises(ValidationError):
            Digest(value=b"\x00" * 31)


class TestHashing:
    def test_empty_input(self) -> None:
        assert hash_stream(io.BytesIO(b"")).hex == (
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        )

    def test_chunking_does_not_change_digest(self) -> None:
        data = bytes(range(256)) * 100
        assert hash_stream(io.BytesIO(data), 7) == Digest.of(data)

    def test_file(self, tmp_path: Path) -> None:
        path = tmp_path / "blob"
        path.write_bytes(b"hello")
        assert hash_file(path) == Digest.of(b"hello")

    def test_read_failure_reports_bytes_consumed(self) -> None:
        with pytest.raises(HashReadError) as exc_info:
            hash_stream(_FailingStream(b"x" * 10), 4)
        assert exc_info.value.bytes_consumed == 10


# ---------------------------------------------------------------------------
# Findings
# ---------------------------------------------------------------------------


class TestFinding:
    def test_parsed_needs_payload_ref(self) -> None:
        with pytest.raises(ValidationError):
            Finding(
                descriptor_id="ollama-history", resolved_path="/x", size=1,
                digest=None, status=FindingStatus.PARSED,
            )

    def test_payload_ref_needs_parsed(self) -> None:
        with pytest.raises(ValidationError):
            Finding(
                descriptor_id="ollama-history", resolved_path="/x", size=1, digest=None,
                payload_ref="sessions:/x", status=FindingStatus.PRESENT_UNPARSED,
            )

    def test_valid(self) -> None:
        f = Finding(
            descriptor_id="ollama-history", resolved_path="/x", size=1,
            digest=Digest.of(b"x"), payload_ref="sessions:/x", status=FindingStatus.PARSED,
        )
        assert f.model_dump(mode="json")["digest"] == Digest.of(b"x").hex


# ---------------------------------------------------------------------------
# Custody chain
# ---------------------------------------------------------------------------


def _chain(n: int) -> list:
    entries: list = []
    for i in range(n):
        entries.append(
            custody_append(
                entries, "examiner", f"collect item-{i}", Digest.of(str(i).encode()),
                timestamp=T0 + timedelta(seconds=i),
            )
        )
    return entries


class TestCustodyChain:
    def test_first_entry_chains_to_zero(self) -> None:
        (entry,) = _chain(1)
        assert entry.seq == 0
        assert entry.prev_hash == ZERO_DIGEST
        assert entry.entry_hash == entry.expected_hash()

    def test_chain_verifies(self) -> None:
        entries = _chain(5)
        assert custody_verify(entries) is None
        for prev, entry in zip(entries, entries[1:], strict=False):
            assert entry.prev_hash == prev.entry_hash

    def test_tampered_action_breaks_at_that_entry(self) -> None:
        entries = _chain(5)
        entries[2] = entries[2].model_copy(update={"action": "collect something-else"})
        assert custody_verify(entries) == 2

    def test_append_refuses_broken_chain(self) -> None:
        entries = _chain(3)
        entries[1] = entries[1].model_copy(update={"seq": 7})
        with pytest.raises(CustodyChainError) as exc_info:
            custody_append(entries, "examiner", "collect", ZERO_DIGEST)
        assert exc_info.value.broken_index == 1

    def test_timestamp_truncated_to_ms(self) -> None:
        entry = custody_append(
            [], "examiner", "collect", ZERO_DIGEST, timestamp=T0 + timedelta(microseconds=1500)
        )
        assert entry.timestamp.microsecond == 1000


class TestCustodyFile:
    def test_log_round_trips_and_verifies(self, tmp_path: Path) -> None:
        path = tmp_path / "custody.jsonl"
        log = CustodyLog(path, actor="examiner", clock=_ticking_clock())
        for i in range(3):
            log.append(f"collect {i}", Digest.of(bytes([i])))
        assert verify_custody_file(path) is None
        entries, broken = parse_custody_log(path.read_bytes())
        assert broken is None
        assert [e.entry_hash for e in entries] == [e.entry_hash for e in log.entries]

    def test_reopen_continues_chain(self, tmp_path: Path) -> None:
        path = tmp_path / "custody.jsonl"
        first = CustodyLog(path, actor="examiner")
        first.append("collect a", Digest.of(b"a"))
        second = CustodyLog(path, actor="examiner")
        entry = second.append("collect b", Digest.of(b"b"))
        assert entry.seq == 1
        assert entry.prev_hash == first.head
        assert verify_custody_file(path) is None

    def test_edited_line_is_detected(self, tmp_path: Path) -> None:
        path = tmp_path / "custody.jsonl"
        log = CustodyLog(path, actor="examiner")
        for i in range(3):
            log.append(f"collect {i}", Digest.of(bytes([i])))
        lines = path.read_bytes().split(b"\n")
        lines[1] = lines[1].replace(b"collect 1", b"collect 9")
        tampered = b"\n".join(lines)
        assert verify_custody_bytes(tampered) == 1

    def test_reformatted_line_is_detected(self, tmp_path: Path) -> None:
        path = tmp_path / "custody.jsonl"
        log = CustodyLog(path, actor="examiner")
        log.append("collect a", Digest.of(b"a"))
        log.append("collect b", Digest.of(b"b"))
        lines = path.read_bytes().split(b"\n")
        lines[0] = lines[0].replace(b'","', b'", "', 1)
        assert verify_custody_bytes(b"\n".join(lines)) == 0

    def test_opening_broken_file_raises(self, tmp_path: Path) -> None:
        path = tmp_path / "custody.jsonl"
        path.write_bytes(b"not json\n")
        with pytest.raises(CustodyChainError):
            CustodyLog(path)

    def test_empty_log_verifies(self) -> None:
        assert verify_custody_bytes(b"") is None
