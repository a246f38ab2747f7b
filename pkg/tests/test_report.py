"""Tests for JSON/CSV report rendering and reloading."""

from __future__ import annotations

import csv
import io
import json
from datetime import UTC, datetime
from pathlib import Path

import pytest

from llm_triage.analyzers.ollama import LogEventKind, ServerLogEvent
from llm_triage.catalog import OsProfile
from llm_triage.report import (
    CSV_COLUMNS,
    ReportFormat,
    TriageReport,
    emit_report,
    load_report,
    timeline_csv,
)
from llm_triage.scanner import ScanReport
from llm_triage.timeline import build_timeline


class TestJsonReport:
    def test_sections_mirror_the_scan(self, linux_scan: ScanReport) -> None:
        report = TriageReport.from_scan(linux_scan)
        assert report.meta.os_profile is OsProfile.LINUX
        assert report.meta.tool_version == linux_scan.tool_version
        assert report.findings == linux_scan.findings
        assert report.timeline == build_timeline(linux_scan)
        assert report.custody_digest == linux_scan.custody_digest

    def test_byte_deterministic(self, linux_scan: ScanReport) -> None:
        assert emit_report(linux_scan) == emit_report(linux_scan)

    def test_digests_render_as_hex(self, linux_scan: ScanReport) -> None:
        doc = json.loads(emit_report(linux_scan))
        assert doc["custody_digest"] == linux_scan.custody_digest.hex  # type: ignore[union-attr]
        hashed = [f["digest"] for f in doc["findings"] if f["digest"] is not None]
        assert hashed and all(len(d) == 64 for d in hashed)
        assert list(doc)[0] == "meta"

    def test_reload_round_trip(self, tmp_path: Path, linux_scan: ScanReport) -> None:
        data = emit_report(linux_scan)
        path = tmp_path / "report.json"
        path.write_bytes(data)
        assert load_report(path).to_json() == data

    def test_load_rejects_non_json(self, tmp_path: Path) -> None:
        path = tmp_path / "report.json"
        path.write_bytes(b"not json")
        with pytest.raises(ValueError, match="not a JSON report"):
            load_report(path)


class TestCsvReport:
    def test_one_row_per_event(self, linux_scan: ScanReport) -> None:
        data = emit_report(linux_scan, fmt=ReportFormat.CSV)
        rows = list(csv.reader(io.StringIO(data.decode("utf-8"))))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert len(rows) - 1 == len(build_timeline(linux_scan))

    def test_timestamp_rendering(self) -> None:
        scan = ScanReport(
            root="/e",
            os_profile=OsProfile.LINUX,
            scan_time=datetime(2025, 9, 1, tzinfo=UTC),
            server_log_events=[
                ServerLogEvent(
                    kind=LogEventKind.STARTUP,
                    raw_line="Listening, with a comma",
                    line_no=1,
                    timestamp=datetime(2025, 8, 29, 10, 0, 0, 123456, tzinfo=UTC),
                ),
                ServerLogEvent(kind=LogEventKind.SHUTDOWN, raw_line="bye", line_no=2),
            ],
        )
        rows = list(csv.reader(io.StringIO(timeline_csv(build_timeline(scan)).decode())))
        assert rows[1] == [
            "2025-08-29T10:00:00.123Z", "Exact", "System", "startup",
            "Listening, with a comma", "",
        ]
        assert rows[2][:2] == ["", "FileOrderOnly"]

    def test_empty_timeline_is_header_only(self) -> None:
        assert timeline_csv([]) == (",".join(CSV_COLUMNS) + "\n").encode()
