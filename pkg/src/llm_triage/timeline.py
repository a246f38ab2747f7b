"""Merge analyzer output into one ordered activity timeline.

Ordering key, ascending::

    (undated last, timestamp, quality, tool, evidence path, line_no, kind, summary)

Quality ranks Exact < MonthBound < FileOrderOnly. Undated events sort after
every dated one and keep file order among themselves.
"""

from __future__ import annotations

import logging
from datetime import datetime
from enum import StrEnum

from pydantic import BaseModel

from llm_triage.analyzers.lmstudio import ChatRole
from llm_triage.analyzers.ollama import LogEventKind
from llm_triage.catalog import Tool, get_descriptor
from llm_triage.scanner import ScanReport
from llm_triage.timestamps import EPOCH, parse_month

log = logging.getLogger(__name__)

SUMMARY_MAX = 200


class TimeQuality(StrEnum):
    EXACT = "Exact"
    MONTH_BOUND = "MonthBound"
    FILE_ORDER_ONLY = "FileOrderOnly"


_QUALITY_RANK = {TimeQuality.EXACT: 0, TimeQuality.MONTH_BOUND: 1, TimeQuality.FILE_ORDER_ONLY: 2}

FLAG_TZ_ASSUMED = "tz-assumed"
FLAG_FS_DERIVED = "fs-derived"
FLAG_RELATIVE = "relative-order"


class TimelineEvent(BaseModel):
    timestamp: datetime | None = None
    time_quality: TimeQuality
    tool: Tool
    kind: str
    summary: str
    # ``resolved_path`` of the finding this event came from.
    evidence: str
    detail_ref: str | None = None
    line_no: int = 0
    flags: list[str] = []


def summarize(text: str) -> str:
    """Single line, at most SUMMARY_MAX characters."""
    flat = " ".join(text.split())
    if len(flat) <= SUMMARY_MAX:
        return flat
    return flat[: SUMMARY_MAX - 1] + "…"


def sort_key(e: TimelineEvent) -> tuple[bool, datetime, int, str, str, int, str, str]:
    return (
        e.timestamp is None,
        e.timestamp or EPOCH,
        _QUALITY_RANK[e.time_quality],
        str(e.tool),
        e.evidence,
        e.line_no,
        e.kind,
        e.summary,
    )


_LOG_KINDS = {
    LogEventKind.STARTUP: "startup",
    LogEventKind.SHUTDOWN: "shutdown",
    LogEventKind.MODEL_LOAD: "model-load",
    LogEventKind.API_REQUEST: "api-request",
}
_MESSAGE_KINDS = {
    ChatRole.USER: "prompt",
    ChatRole.ASSISTANT: "response",
    ChatRole.SYSTEM: "system-message",
    ChatRole.UNKNOWN: "message",
}


def _session_events(scan: ScanReport) -> list[TimelineEvent]:
    events: list[TimelineEvent] = []
    for session in scan.sessions:
        if session.prompts_only:
            # Ollama history; its prompts come from ``ollama_prompts`` with line numbers
            continue
        ref = f"sessions:{session.source_path}"
        if session.created_at is not None:
            events.append(
                TimelineEvent(
                    timestamp=session.created_at,
                    time_quality=TimeQuality.EXACT,
                    tool=session.tool,
                    kind="session-created",
                    summary=summarize(session.title or session.session_id),
                    evidence=session.source_path,
                    detail_ref=ref,
                )
            )
        for i, message in enumerate(session.messages, start=1):
            dated = message.timestamp is not None
            events.append(
                TimelineEvent(
                    timestamp=message.timestamp,
                    time_quality=TimeQuality.EXACT if dated else TimeQuality.FILE_ORDER_ONLY,
                    tool=session.tool,
                    kind=_MESSAGE_KINDS[message.role],
                    summary=summarize(message.text),
                    evidence=session.source_path,
                    detail_ref=f"{ref}#{i}",
                    line_no=i,
                    flags=[] if dated else [FLAG_RELATIVE],
                )
            )
    return events


def _prompt_events(scan: ScanReport) -> list[TimelineEvent]:
    return [
        TimelineEvent(
            time_quality=TimeQuality.FILE_ORDER_ONLY,
            tool=Tool.OLLAMA,
            kind="prompt",
            summary=summarize(p.text),
            evidence=p.source_path,
            detail_ref=f"sessions:{p.source_path}#{p.line_no}",
            line_no=p.line_no,
            flags=[FLAG_RELATIVE],
        )
        for p in scan.ollama_prompts
    ]


def _tool_of(evidence: str, by_path: dict[str, str]) -> Tool:
    descriptor_id = by_path.get(evidence)
    return get_descriptor(descriptor_id).tool if descriptor_id else Tool.SYSTEM


def _log_events(scan: ScanReport, by_path: dict[str, str]) -> list[TimelineEvent]:
    events: list[TimelineEvent] = []
    for e in scan.server_log_events:
        kind = _LOG_KINDS.get(e.kind)
        if kind is None:
            continue
        flags: list[str] = []
        if e.timestamp is not None:
            timestamp, quality = e.timestamp, TimeQuality.EXACT
            if e.tz_assumed:
                flags.append(FLAG_TZ_ASSUMED)
        elif e.month_bound is not None and (month := parse_month(e.month_bound)) is not None:
            timestamp, quality = month, TimeQuality.MONTH_BOUND
        else:
            timestamp, quality = None, TimeQuality.FILE_ORDER_ONLY
            flags.append(FLAG_RELATIVE)
        summary = f"{kind} {e.endpoint}" if e.endpoint else e.raw_line
        events.append(
            TimelineEvent(
                timestamp=timestamp,
                time_quality=quality,
                tool=_tool_of(e.source_path, by_path),
                kind=kind,
                summary=summarize(summary),
                evidence=e.source_path,
                detail_ref=f"server_log_events:{e.source_path}#{e.line_no}",
                line_no=e.line_no,
                flags=flags,
            )
        )
    return events


def _invocation_events(scan: ScanReport) -> list[TimelineEvent]:
    events: list[TimelineEvent] = []
    for inv in scan.invocations:
        dated = inv.timestamp is not None
        what = inv.prompt if inv.prompt is not None else inv.raw_line
        events.append(
            TimelineEvent(
                timestamp=inv.timestamp,
                time_quality=TimeQuality.EXACT if dated else TimeQuality.FILE_ORDER_ONLY,
                tool=Tool.LLAMACPP,
                kind="invocation",
                summary=summarize(f"{inv.binary} [{inv.recoverability}] {what}"),
                evidence=inv.source_path,
                detail_ref=f"invocations:{inv.source_path}#{inv.line_no}",
                line_no=inv.line_no,
                flags=[] if dated else [FLAG_RELATIVE],
            )
        )
    return events


def _mtime_events(scan: ScanReport, covered: set[str]) -> list[TimelineEvent]:
    events: list[TimelineEvent] = []
    for finding in scan.findings:
        if finding.resolved_path in covered or finding.fs_times is None:
            continue
        d = get_descriptor(finding.descriptor_id)
        events.append(
            TimelineEvent(
                timestamp=finding.fs_times.modified,
                time_quality=TimeQuality.EXACT,
                tool=d.tool,
                kind=f"{d.category} (mtime)",
                summary=summarize(finding.resolved_path),
                evidence=finding.resolved_path,
                detail_ref=finding.payload_ref,
                flags=[FLAG_FS_DERIVED],
            )
        )
    return events


def build_timeline(scan: ScanReport) -> list[TimelineEvent]:
    """Every dated or ordered event in ``scan``, totally ordered by :func:`sort_key`.

    Findings with no content-derived event contribute one event at their
    modification time, kind ``"<category> (mtime)"``, flagged fs-derived.
    Server-log lines classified Other are not timeline events.
    """
    by_path = {f.resolved_path: f.descriptor_id for f in scan.findings}
    events = (
        _session_events(scan)
        + _prompt_events(scan)
        + _log_events(scan, by_path)
        + _invocation_events(scan)
    )
    covered = {e.evidence for e in events}
    events += _mtime_events(scan, covered)
    events.sort(key=sort_key)
    log.info("timeline: %d event(s)", len(events))
    return events
