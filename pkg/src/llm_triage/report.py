"""Triage report documents: JSON (everything) and CSV (timeline only).

Both renderings are byte-deterministic: field order is declaration order,
lists keep scan order, and timestamps use pydantic's fixed ISO rendering in
JSON and millisecond RFC 3339 in CSV.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from datetime import datetime
from enum import StrEnum
from pathlib import Path

from pydantic import BaseModel

from llm_triage.analyzers.llamacpp import RunInvocation
from llm_triage.analyzers.lmstudio import (
    ChatSession,
    InternalInventory,
    ModelCacheEntry,
    PresetRecord,
)
from llm_triage.analyzers.ollama import (
    BlobVerification,
    ModelManifest,
    PromptRecord,
    ServerLogEvent,
)
from llm_triage.analyzers.sqlite_sidecar import SqliteSighting
from llm_triage.catalog import EnvBinding, OsProfile
from llm_triage.evidence import Digest, Finding
from llm_triage.scanner import InstallEvidence, ModelFile, ScanReport
from llm_triage.timeline import TimelineEvent, build_timeline
from llm_triage.timestamps import rfc3339_ms

log = logging.getLogger(__name__)

CSV_COLUMNS = ("timestamp", "quality", "tool", "kind", "summary", "evidence_path")


class ReportFormat(StrEnum):
    JSON = "json"
    CSV = "csv"


class ReportMeta(BaseModel):
    tool_version: str
    scan_time: datetime
    root: str
    os_profile: OsProfile


class TriageReport(BaseModel):
    meta: ReportMeta
    homes: list[str] = []
    lm_homes: list[str] = []
    home_pointers: dict[str, str] = {}
    installs: list[InstallEvidence] = []
    findings: list[Finding] = []
    env_overrides: list[EnvBinding] = []
    manifests: list[ModelManifest] = []
    blob_verifications: list[BlobVerification] = []
    models: list[ModelCacheEntry] = []
    model_files: list[ModelFile] = []
    sessions: list[ChatSession] = []
    ollama_prompts: list[PromptRecord] = []
    presets: list[PresetRecord] = []
    invocations: list[RunInvocation] = []
    server_log_events: list[ServerLogEvent] = []
    sqlite_sightings: list[SqliteSighting] = []
    internal_inventory: dict[str, InternalInventory] = {}
    timeline: list[TimelineEvent] = []
    warnings: list[str] = []
    custody_digest: Digest | None = None

    @classmethod
    def from_scan(
        cls, scan: ScanReport, timeline: list[TimelineEvent] | None = None
    ) -> TriageReport:
        return cls(
            meta=ReportMeta(
                tool_version=scan.tool_version,
                scan_time=scan.scan_time,
                root=scan.root,
                os_profile=scan.os_profile,
            ),
            homes=scan.homes,
            lm_homes=scan.lm_homes,
            home_pointers=scan.home_pointers,
            installs=scan.installs,
            findings=scan.findings,
            env_overrides=scan.env_overrides,
            manifests=scan.manifests,
            blob_verifications=scan.blob_verifications,
            models=scan.models,
            model_files=scan.model_files,
            sessions=scan.sessions,
            ollama_prompts=scan.ollama_prompts,
            presets=scan.presets,
            invocations=scan.invocations,
            server_log_events=scan.server_log_events,
            sqlite_sightings=scan.sqlite_sightings,
            internal_inventory=scan.internal_inventory,
            timeline=timeline if timeline is not None else build_timeline(scan),
            warnings=scan.warnings,
            custody_digest=scan.custody_digest,
        )

    def to_json(self) -> bytes:
        text = json.dumps(self.model_dump(mode="json"), indent=2, ensure_ascii=False)
        return (text + "\n").encode("utf-8")

    def to_csv(self) -> bytes:
        return timeline_csv(self.timeline)


def timeline_csv(events: list[TimelineEvent]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for e in events:
        writer.writerow(
            [
                rfc3339_ms(e.timestamp) if e.timestamp is not None else "",
                e.time_quality,
                e.tool,
                e.kind,
                e.summary,
                e.evidence,
            ]
        )
    return buf.getvalue().encode("utf-8")


def emit_report(
    scan: ScanReport,
    timeline: list[TimelineEvent] | None = None,
    fmt: ReportFormat = ReportFormat.JSON,
) -> bytes:
    report = TriageReport.from_scan(scan, timeline)
    return report.to_json() if fmt is ReportFormat.JSON else report.to_csv()


def load_report(path: Path) -> TriageReport:
    """Read a JSON report written by ``scan --out``."""
    try:
        data = json.loads(path.read_bytes())
    except ValueError as exc:
        raise ValueError(f"{path}: not a JSON report ({exc})") from None
    return TriageReport.model_validate(data)


def write_report(data: bytes, out: Path) -> None:
    """Write ``data`` to ``out``; an unwritable destination raises ``OSError``."""
    out.write_bytes(data)
    log.info("wrote %s (%d bytes)", out, len(data))
