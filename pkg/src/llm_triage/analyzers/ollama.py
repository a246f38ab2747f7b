"""Ollama artifacts: manifests, the blob store, CLI history, server logs, service units.

The server-log line model defined here is shared with LM Studio's
month-partitioned logs.
"""

from __future__ import annotations

import json
import logging
import re
import shlex
from collections.abc import Callable, Iterator, Mapping
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from enum import StrEnum
from pathlib import Path, PurePosixPath
from typing import Any

from pydantic import BaseModel

from llm_triage.catalog import ENV_ALLOWLIST, EnvBinding, stays_within, walk_files
from llm_triage.errors import TriageError
from llm_triage.evidence import Digest, hash_file
from llm_triage.timestamps import assume_zone, parse_timestamp

log = logging.getLogger(__name__)

DIGEST_RE = re.compile(r"sha256:([0-9a-f]{64})")


class ManifestError(TriageError, ValueError):
    """The manifest document is not a JSON object."""


class ManifestPathError(ManifestError):
    """The manifest path does not end in registry/namespace/model/tag."""


# ---------------------------------------------------------------------------
# Manifests and blobs
# ---------------------------------------------------------------------------


class ModelRef(BaseModel):
    registry: str
    library: str
    model: str
    tag: str

    def __str__(self) -> str:
        return f"{self.registry}/{self.library}/{self.model}:{self.tag}"


class ModelManifest(BaseModel):
    source_path: str
    model_ref: ModelRef
    layer_digests: list[Digest]
    config_digest: Digest | None = None
    raw: Any = None
    # Parsed, but no digest was found anywhere in the document.
    flagged: bool = False

    @property
    def all_digests(self) -> list[Digest]:
        out = [self.config_digest] if self.config_digest is not None else []
        out.extend(d for d in self.layer_digests if d not in out)
        return out


def model_ref_from_path(source_path: str) -> ModelRef:
    parts = PurePosixPath(source_path.replace("\\", "/")).parts
    if "manifests" not in parts:
        raise ManifestPathError(f"no manifests/ segment in {source_path!r}")
    idx = len(parts) - 1 - parts[::-1].index("manifests")
    segments = [p for p in parts[idx + 1 :] if p]
    if len(segments) < 4:
        raise ManifestPathError(
            f"manifest path {source_path!r} lacks registry/namespace/model/tag segments"
        )
    *registry, library, model, tag = segments
    return ModelRef(registry="/".join(registry), library=library, model=model, tag=tag)


def _sweep_digests(node: Any, path: tuple[str, ...] = ()) -> Iterator[tuple[tuple[str, ...], str]]:
    """Every ``sha256:<hex>`` inside keys and string values, in document order."""
    if isinstance(node, str):
        for m in DIGEST_RE.finditer(node):
            yield path, m.group(1)
    elif isinstance(node, dict):
        for key, value in node.items():
            for m in DIGEST_RE.finditer(str(key)):
                yield path, m.group(1)
            yield from _sweep_digests(value, (*path, str(key)))
    elif isinstance(node, list):
        for i, value in enumerate(node):
            yield from _sweep_digests(value, (*path, str(i)))


def parse_manifest(document: bytes, source_path: str) -> ModelManifest:
    """Sweep every ``sha256:<hex>`` occurrence out of a manifest document.

    Digests under the top-level ``config`` key become ``config_digest``;
    every other one is a layer, in document order, without repeats.
    """
    model_ref = model_ref_from_path(source_path)
    try:
        doc = json.loads(document)
    except (UnicodeDecodeError, ValueError) as exc:
        raise ManifestError(f"{source_path}: not JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ManifestError(f"{source_path}: manifest is not a JSON object")

    config_digest: Digest | None = None
    layers: list[Digest] = []
    for path, hex_digest in _sweep_digests(doc):
        digest = Digest.from_hex(hex_digest)
        if path[:1] == ("config",) and config_digest is None:
            config_digest = digest
        elif digest not in layers:
            layers.append(digest)
    flagged = config_digest is None and not layers
    if flagged:
        log.warning("manifest %s lists no digests", source_path)
    return ModelManifest(
        source_path=source_path,
        model_ref=model_ref,
        layer_digests=layers,
        config_digest=config_digest,
        raw=doc,
        flagged=flagged,
    )


class BlobStatus(StrEnum):
    VERIFIED = "Verified"
    MISSING = "Missing"
    MISMATCH = "Mismatch"


class BlobCheck(BaseModel):
    digest: Digest
    status: BlobStatus
    blob_path: str | None = None


class BlobVerification(BaseModel):
    manifest_path: str
    model_ref: ModelRef
    checks: list[BlobCheck]

    @property
    def all_verified(self) -> bool:
        return all(c.status is BlobStatus.VERIFIED for c in self.checks)

    def status_of(self, digest: Digest) -> BlobStatus | None:
        for check in self.checks:
            if check.digest == digest:
                return check.status
        return None


def blob_path(blobs_dir: Path, digest: Digest) -> Path | None:
    """Locate the blob file; ``sha256-<hex>`` with the older ``sha256:<hex>`` as fallback."""
    for name in (f"sha256-{digest.hex}", f"sha256:{digest.hex}"):
        candidate = blobs_dir / name
        if candidate.is_file():
            return candidate
    return None


def verify_blobs(
    m: ModelManifest,
    blobs_dir: Path,
    *,
    precomputed: Mapping[Path, Digest] | None = None,
    path_label: Callable[[Path], str] = str,
    max_workers: int = 4,
) -> BlobVerification:
    """Hash every blob the manifest references and compare with its name."""

    def check(digest: Digest) -> BlobCheck:
        path = blob_path(blobs_dir, digest)
        if path is None:
            return BlobCheck(digest=digest, status=BlobStatus.MISSING)
        actual = (precomputed or {}).get(path)
        if actual is None:
            try:
                actual = hash_file(path)
            except OSError as exc:
                log.warning("cannot hash blob %s: %s", path, exc)
                return BlobCheck(
                    digest=digest, status=BlobStatus.MISSING, blob_path=path_label(path)
                )
        status = BlobStatus.VERIFIED if actual == digest else BlobStatus.MISMATCH
        return BlobCheck(digest=digest, status=status, blob_path=path_label(path))

    digests = m.all_digests
    with ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="blob-verify") as pool:
        checks = list(pool.map(check, digests))
    return BlobVerification(manifest_path=m.source_path, model_ref=m.model_ref, checks=checks)


def blobs_dir_for(manifest_path: Path) -> Path:
    """The ``blobs`` directory that sits beside the manifest's ``manifests`` ancestor."""
    for parent in manifest_path.parents:
        if parent.name == "manifests":
            return parent.parent / "blobs"
    return manifest_path.parent / "blobs"


# ---------------------------------------------------------------------------
# CLI history
# ---------------------------------------------------------------------------


class PromptRecord(BaseModel):
    text: str
    line_no: int
    source_path: str


def decode_text(data: bytes, source_path: str, warnings: list[str] | None = None) -> str:
    """UTF-8 decode; invalid bytes become U+FFFD with a warning."""
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError:
        message = f"{source_path}: invalid UTF-8, decoded lossily"
        log.warning(message)
        if warnings is not None:
            warnings.append(message)
        return data.decode("utf-8", errors="replace")


def iter_lines(text: str) -> Iterator[tuple[int, str]]:
    """``(line_no, line)`` for LF or CRLF text; numbering counts every physical line."""
    for line_no, line in enumerate(text.split("\n"), start=1):
        yield line_no, line.removesuffix("\r")


def parse_history(
    data: bytes, source_path: str, *, warnings: list[str] | None = None
) -> list[PromptRecord]:
    """One record per non-empty line of ``~/.ollama/history``."""
    text = decode_text(data, source_path, warnings)
    return [
        PromptRecord(text=line, line_no=line_no, source_path=source_path)
        for line_no, line in iter_lines(text)
        if line
    ]


# ---------------------------------------------------------------------------
# Server logs
# ---------------------------------------------------------------------------


class LogEventKind(StrEnum):
    STARTUP = "Startup"
    SHUTDOWN = "Shutdown"
    MODEL_LOAD = "ModelLoad"
    API_REQUEST = "ApiRequest"
    OTHER = "Other"


class ServerLogEvent(BaseModel):
    timestamp: datetime | None = None
    kind: LogEventKind
    raw_line: str
    line_no: int
    source_path: str = ""
    endpoint: str | None = None
    tz_assumed: bool = False
    # ``YYYY-MM`` of the LM Studio month directory the log sat in.
    month_bound: str | None = None


# Leading timestamp shapes, tried in order.
_TS_PATTERNS: tuple[tuple[re.Pattern[str], str], ...] = (
    # slog: time=2025-08-29T10:00:00.000+10:00 level=INFO ...
    (re.compile(r'^time="?(?P<ts>[0-9T:\-+.Z]+?)"?(?:\s|$)'), "iso"),
    # GIN access log: [GIN] 2025/08/29 - 10:00:01 | 200 | ...
    (re.compile(r"^\[GIN\]\s+(?P<d>\d{4}/\d{2}/\d{2})\s+-\s+(?P<t>\d{2}:\d{2}:\d{2})"), "ymd"),
    # RFC 3339-ish, optionally bracketed: [2025-08-29 10:00:00][INFO] / 2025-08-29T10:00:00Z
    (
        re.compile(
            r"^\[?(?P<ts>\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2}(?:[.,]\d+)?"
            r"(?:Z|[+-]\d{2}:?\d{2})?)\]?"
        ),
        "iso",
    ),
    # Go log package: 2025/08/29 10:00:00 routes.go:1000: ...
    (re.compile(r"^(?P<d>\d{4}/\d{2}/\d{2})\s+(?P<t>\d{2}:\d{2}:\d{2})"), "ymd"),
)

_HTTP_RE = re.compile(
    r'\b(?:GET|POST|PUT|DELETE|PATCH|HEAD|OPTIONS)\b\s*"?\s*(?P<path>/[^\s"?]*)', re.IGNORECASE
)
_ENDPOINT_RE = re.compile(r"(?P<path>/(?:api|v1)/[A-Za-z0-9_./\-]*)")
_MODEL_LOAD_RE = re.compile(r"loading model|llama_model_load|model load", re.IGNORECASE)
_SHUTDOWN_RE = re.compile(r"\bshut(?:ting)?\s*down\b|\bshutdown\b", re.IGNORECASE)
_STARTUP_RE = re.compile(r"\blisten(?:ing)?\b|\bserv(?:e|ing)\b", re.IGNORECASE)


def parse_log_timestamp(line: str) -> tuple[datetime | None, bool]:
    """Leading timestamp of ``line`` as UTC plus whether its zone was assumed."""
    for pattern, shape in _TS_PATTERNS:
        m = pattern.match(line)
        if not m:
            continue
        if shape == "iso":
            dt = parse_timestamp(m.group("ts").replace(",", "."))
        else:
            dt = parse_timestamp(f"{m.group('d').replace('/', '-')}T{m.group('t')}")
        if dt is None:
            continue
        return assume_zone(dt)
    return None, False


def classify_line(line: str) -> tuple[LogEventKind, str | None]:
    """Kind and (for API requests) the endpoint path.

    Rules, first match wins: HTTP verb + path or an /api/ or /v1/ endpoint
    is an API request; "loading model" / "llama_model_load" a model load;
    shutdown; listen/serve a startup; anything else is Other.
    """
    m = _HTTP_RE.search(line)
    if m:
        return LogEventKind.API_REQUEST, m.group("path")
    m = _ENDPOINT_RE.search(line)
    if m:
        return LogEventKind.API_REQUEST, m.group("path")
    if _MODEL_LOAD_RE.search(line):
        return LogEventKind.MODEL_LOAD, None
    if _SHUTDOWN_RE.search(line):
        return LogEventKind.SHUTDOWN, None
    if _STARTUP_RE.search(line):
        return LogEventKind.STARTUP, None
    return LogEventKind.OTHER, None


def parse_server_log(
    data: bytes, source_path: str = "", *, warnings: list[str] | None = None
) -> list[ServerLogEvent]:
    """One event per non-empty line, raw text kept verbatim."""
    text = decode_text(data, source_path, warnings)
    events: list[ServerLogEvent] = []
    for line_no, line in iter_lines(text):
        if not line.strip():
            continue
        timestamp, tz_assumed = parse_log_timestamp(line)
        kind, endpoint = classify_line(line)
        events.append(
            ServerLogEvent(
                timestamp=timestamp,
                kind=kind,
                raw_line=line,
                line_no=line_no,
                source_path=source_path,
                endpoint=endpoint,
                tz_assumed=tz_assumed,
            )
        )
    return events


# ---------------------------------------------------------------------------
# systemd service unit
# ---------------------------------------------------------------------------


def parse_service_unit(
    data: bytes, *, source: str = "", source_kind: str = "service-unit"
) -> list[EnvBinding]:
    """Allowlisted ``Environment=`` assignments, quoted or bare, several per line."""
    text = data.decode("utf-8", errors="replace")
    bindings: list[EnvBinding] = []
    for _, line in iter_lines(text):
        stripped = line.strip()
        if not stripped.startswith("Environment="):
            continue
        value = stripped[len("Environment=") :]
        try:
            assignments = shlex.split(value)
        except ValueError:
            log.debug("unbalanced quoting in %r, splitting on whitespace", stripped)
            assignments = [a.strip("\"'") for a in value.split()]
        for assignment in assignments:
            name, sep, val = assignment.partition("=")
            if sep and name in ENV_ALLOWLIST:
                bindings.append(
                    EnvBinding(name=name, value=val, source=source, source_kind=source_kind)
                )
    return bindings


# ---------------------------------------------------------------------------
# Whole-home analysis (CLI)
# ---------------------------------------------------------------------------


class OllamaHomeReport(BaseModel):
    home: str
    manifests: list[ModelManifest] = []
    verifications: list[BlobVerification] = []
    prompts: list[PromptRecord] = []
    server_log_events: list[ServerLogEvent] = []
    warnings: list[str] = []


def analyze_home(ollama_home: Path, *, verify: bool = False) -> OllamaHomeReport:
    """Parse an ``.ollama`` directory in place (history, logs, manifests)."""
    report = OllamaHomeReport(home=str(ollama_home))
    history = ollama_home / "history"
    if history.is_file() and stays_within(history, ollama_home):
        report.prompts = parse_history(
            history.read_bytes(), str(history), warnings=report.warnings
        )
    server_log = ollama_home / "logs" / "server.log"
    if server_log.is_file() and stays_within(server_log, ollama_home):
        report.server_log_events = parse_server_log(
            server_log.read_bytes(), str(server_log), warnings=report.warnings
        )
    manifests_dir = ollama_home / "models" / "manifests"
    if manifests_dir.is_dir():
        for path in sorted(walk_files(manifests_dir, base=ollama_home)):
            try:
                manifest = parse_manifest(path.read_bytes(), str(path))
            except (ManifestError, OSError) as exc:
                report.warnings.append(f"{path}: {exc}")
                continue
            report.manifests.append(manifest)
            if verify:
                report.verifications.append(verify_blobs(manifest, blobs_dir_for(path)))
    return report
