"""Filesystem triage: walk a mounted root and turn catalog hits into findings.

A scan runs in phases:

1. OS profile, user homes, LM Studio homes and environment overrides
2. candidate planning from the catalog (non-sweep descriptors claim first)
3. collection on the worker pool: stat, hash, parse; one custody entry per
   finding, in plan order
4. cross-checks that need several findings at once (model caches, blob
   verification, LM Studio internals, SQLite sightings)
5. installation evidence

Nothing under the root is ever opened for writing.
"""

from __future__ import annotations

import logging
import os
import re
import time
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import UTC, datetime
from enum import StrEnum
from pathlib import Path, PurePosixPath
from typing import Any

from pydantic import BaseModel

from llm_triage import __version__, config
from llm_triage.analyzers import gguf, lmstudio, ollama, sqlite_sidecar
from llm_triage.analyzers.gguf import GgufError, ModelFingerprint
from llm_triage.analyzers.llamacpp import RunInvocation, Shell, parse_shell_history
from llm_triage.analyzers.lmstudio import (
    ChatMessage,
    ChatRole,
    ChatSession,
    ConversationError,
    InternalInventory,
    ModelCacheEntry,
    PresetRecord,
    PresetSource,
)
from llm_triage.analyzers.ollama import (
    BlobVerification,
    ManifestError,
    ModelManifest,
    PromptRecord,
    ServerLogEvent,
)
from llm_triage.analyzers.sqlite_sidecar import SqliteSighting
from llm_triage.catalog import (
    ArtifactDescriptor,
    EnvBinding,
    OsProfile,
    Tool,
    catalog_entries,
    host_path,
    is_within,
    resolve_paths,
    stays_within,
    to_image_path,
    walk_files,
)
from llm_triage.collector import ParallelCollector
from llm_triage.environment import harvest_env_overrides
from llm_triage.evidence import (
    CustodyLog,
    Digest,
    Finding,
    FindingStatus,
    FsTimes,
    HashReadError,
    hash_file,
)

log = logging.getLogger(__name__)

WINDOWS_PROFILE_EXCLUDES = frozenset(
    name.casefold() for name in ("Public", "Default", "Default User", "All Users")
)
LMSTUDIO_DEFAULT_HOMES = (".lmstudio", ".cache/lm-studio", ".cache/LM Studio", ".config/LM Studio")

# Descriptors whose files are skipped by ``--no-hash-blobs``.
BULK_DESCRIPTORS = frozenset(
    {
        "ollama-blobs",
        "lmstudio-models",
        "llamacpp-model-files",
        "lmstudio-api-prediction-history",
        "system-pagefile",
        "system-swapfile",
    }
)


def _phase(step: int, total: int, label: str) -> None:
    log.info("──────── phase %d/%d: %s ────────", step, total, label)


def _phase_done(step: int, total: int, label: str, summary: str) -> None:
    log.info("──── phase %d/%d: %s — %s ────", step, total, label, summary)


def _warn(warnings: list[str] | None, message: str) -> None:
    log.warning(message)
    if warnings is not None:
        warnings.append(message)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


class InstallKind(StrEnum):
    BINARY = "Binary"
    SERVICE_UNIT = "ServiceUnit"
    PREFETCH_NAME = "PrefetchName"
    HOME_POINTER = "HomePointer"
    DATA_DIRECTORY = "DataDirectory"


class InstallEvidence(BaseModel):
    tool: Tool
    kind: InstallKind
    path: str
    detail: str


class ModelFile(BaseModel):
    """A GGUF weight file found on disk (Ollama blob, LM Studio cache, loose file)."""

    tool: Tool
    descriptor_id: str
    path: str
    size: int
    fingerprint: ModelFingerprint | None = None
    # Ollama only: the manifest(s) listing this blob.
    model_refs: list[str] = []


class ScanReport(BaseModel):
    root: str
    os_profile: OsProfile
    homes: list[str] = []
    lm_homes: list[str] = []
    # Home pointer file -> the LM Studio home it names, as an image path.
    home_pointers: dict[str, str] = {}
    findings: list[Finding] = []
    installs: list[InstallEvidence] = []
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
    warnings: list[str] = []
    scan_time: datetime
    tool_version: str = __version__
    custody_digest: Digest | None = None


@dataclass
class ScanOptions:
    follow_symlinks: bool = False
    # ``None`` means ``config.MAX_FILE_SIZE``.
    max_file_size: int | None = None
    # False skips content hashing for BULK_DESCRIPTORS.
    hash_bulk: bool = True
    workers: int | None = None
    # Access times after mounting may reflect the examiner, not the user.
    record_access_times: bool = False
    custody_path: Path | None = None
    clock: Callable[[], datetime] | None = None
    # Drive letter -> host directory for overrides that name other volumes.
    volumes: dict[str, Path] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Profile, homes, installs
# ---------------------------------------------------------------------------


def detect_os_profile(root: Path, *, warnings: list[str] | None = None) -> OsProfile:
    """Windows when ``/Windows/System32`` exists (any case), Linux when ``/etc`` does."""
    if host_path(root, "/Windows/System32", case_insensitive=True).is_dir():
        return OsProfile.WINDOWS
    if (root / "etc").is_dir():
        return OsProfile.LINUX
    _warn(warnings, f"{root}: neither /Windows/System32 nor /etc found; assuming Linux")
    return OsProfile.LINUX


def _listdir(path: Path) -> list[str]:
    try:
        return sorted(os.listdir(path))
    except OSError:
        return []


def enumerate_user_homes(
    root: Path, os_profile: OsProfile, *, warnings: list[str] | None = None
) -> list[str]:
    """Home directories as image paths (``/home/alice``, ``/Users/carol``)."""
    homes: list[str] = []
    if os_profile is OsProfile.WINDOWS:
        users = host_path(root, "/Users", case_insensitive=True)
        if not users.is_dir():
            _warn(warnings, f"{root}: no /Users directory")
            return []
        for name in _listdir(users):
            child = users / name
            if name.casefold() in WINDOWS_PROFILE_EXCLUDES:
                continue
            if child.is_dir() and stays_within(child, root):
                homes.append(f"/{users.name}/{name}")
        return homes

    home_dir = root / "home"
    if home_dir.is_dir():
        for name in _listdir(home_dir):
            child = home_dir / name
            if child.is_dir() and stays_within(child, root):
                homes.append(f"/home/{name}")
    else:
        _warn(warnings, f"{root}: no /home directory")
    if (root / "root").is_dir() and stays_within(root / "root", root):
        homes.append("/root")
    return homes


_PREFETCH_RE = re.compile(r"^(.+?\.EXE)-[0-9A-F]{8}\.pf$", re.IGNORECASE)
_PREFETCH_TOOLS: dict[str, Tool] = {
    "OLLAMA.EXE": Tool.OLLAMA,
    "OLLAMA APP.EXE": Tool.OLLAMA,
    "LM STUDIO.EXE": Tool.LMSTUDIO,
    "LLAMA-CLI.EXE": Tool.LLAMACPP,
    "LLAMA-SERVER.EXE": Tool.LLAMACPP,
    "LLAMA-RUN.EXE": Tool.LLAMACPP,
    "MAIN.EXE": Tool.LLAMACPP,
}
_LINUX_BINARIES: tuple[tuple[str, Tool], ...] = (
    ("/usr/local/bin/ollama", Tool.OLLAMA),
    ("/usr/bin/ollama", Tool.OLLAMA),
    ("/usr/local/bin/llama-cli", Tool.LLAMACPP),
    ("/usr/local/bin/llama-server", Tool.LLAMACPP),
    ("/usr/local/bin/llama-run", Tool.LLAMACPP),
)


def lmstudio_homes(
    root: Path,
    os_profile: OsProfile,
    homes: Sequence[str],
    *,
    warnings: list[str] | None = None,
) -> list[str]:
    """Existing LM Studio homes: each pointer target, then the default locations."""
    ci = os_profile is OsProfile.WINDOWS
    found: list[str] = []
    for home in homes:
        pointer = host_path(root, f"{home}/.lmstudio-home-pointer", case_insensitive=ci)
        if pointer.is_file() and stays_within(pointer, root):
            target = lmstudio.resolve_home_pointer(
                pointer.read_bytes(), home=home, warnings=warnings
            )
            image = to_image_path(target) if target is not None else None
            if image is not None:
                found.append(image)
        for rel in LMSTUDIO_DEFAULT_HOMES:
            found.append(f"{home}/{rel}")
    out: list[str] = []
    for image in dict.fromkeys(found):
        candidate = host_path(root, image, case_insensitive=ci)
        if candidate.is_dir() and stays_within(candidate, root):
            out.append(image)
    return out


def detect_installs(
    root: Path,
    os_profile: OsProfile,
    homes: Sequence[str] | None = None,
    *,
    lm_homes: Sequence[str] | None = None,
) -> list[InstallEvidence]:
    """Binaries, service units, Prefetch names, data directories and home pointers."""
    ci = os_profile is OsProfile.WINDOWS
    user_homes = list(homes) if homes is not None else enumerate_user_homes(root, os_profile)
    evidence: list[InstallEvidence] = []

    def exists(image: str) -> Path | None:
        path = host_path(root, image, case_insensitive=ci)
        return path if os.path.lexists(path) else None

    if os_profile is not OsProfile.WINDOWS:
        for image, tool in _LINUX_BINARIES:
            if exists(image):
                evidence.append(
                    InstallEvidence(tool=tool, kind=InstallKind.BINARY, path=image, detail="binary")
                )
        if exists("/etc/systemd/system/ollama.service"):
            evidence.append(
                InstallEvidence(
                    tool=Tool.OLLAMA,
                    kind=InstallKind.SERVICE_UNIT,
                    path="/etc/systemd/system/ollama.service",
                    detail="systemd unit",
                )
            )
        if exists("/usr/share/ollama"):
            evidence.append(
                InstallEvidence(
                    tool=Tool.OLLAMA,
                    kind=InstallKind.DATA_DIRECTORY,
                    path="/usr/share/ollama",
                    detail="service account home",
                )
            )
        for home in user_homes:
            for base in (home, f"{home}/Applications"):
                directory = host_path(root, base)
                for name in _listdir(directory):
                    if name.startswith("LM-Studio") and name.endswith(".AppImage"):
                        evidence.append(
                            InstallEvidence(
                                tool=Tool.LMSTUDIO,
                                kind=InstallKind.BINARY,
                                path=f"{base}/{name}",
                                detail="AppImage",
                            )
                        )
    else:
        for home in user_homes:
            path = exists(f"{home}/AppData/Local/ollama")
            if path is not None:
                evidence.append(
                    InstallEvidence(
                        tool=Tool.OLLAMA,
                        kind=InstallKind.DATA_DIRECTORY,
                        path=f"{home}/AppData/Local/{path.name}",
                        detail="application directory",
                    )
                )
        prefetch = host_path(root, "/Windows/Prefetch", case_insensitive=True)
        for name in _listdir(prefetch):
            m = _PREFETCH_RE.match(name)
            if not m:
                continue
            tool = _PREFETCH_TOOLS.get(m.group(1).upper())
            if tool is not None:
                evidence.append(
                    InstallEvidence(
                        tool=tool,
                        kind=InstallKind.PREFETCH_NAME,
                        path=f"/Windows/Prefetch/{name}",
                        detail=m.group(1).upper(),
                    )
                )

    for home in user_homes:
        if exists(f"{home}/.ollama"):
            evidence.append(
                InstallEvidence(
                    tool=Tool.OLLAMA,
                    kind=InstallKind.DATA_DIRECTORY,
                    path=f"{home}/.ollama",
                    detail="data directory",
                )
            )
        if exists(f"{home}/.lmstudio-home-pointer"):
            evidence.append(
                InstallEvidence(
                    tool=Tool.LMSTUDIO,
                    kind=InstallKind.HOME_POINTER,
                    path=f"{home}/.lmstudio-home-pointer",
                    detail="home pointer",
                )
            )
    for lm_home in lm_homes or ():
        evidence.append(
            InstallEvidence(
                tool=Tool.LMSTUDIO,
                kind=InstallKind.DATA_DIRECTORY,
                path=lm_home,
                detail="LM Studio home",
            )
        )
    evidence.sort(key=lambda e: (e.tool, e.kind, e.path))
    return evidence


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Candidate:
    descriptor: ArtifactDescriptor
    host: Path
    image: str


def _fence(path: Path, root: Path, volumes: Mapping[str, Path] | None) -> Path:
    """The scanned base ``path`` belongs to: ``root`` or a mapped volume."""
    for base in (volumes or {}).values():
        if not is_within(path, root) and is_within(path, base):
            return base
    return root


def image_label(path: Path, root: Path, volumes: Mapping[str, Path] | None = None) -> str:
    """Path inside the evidence for a host path (``/home/alice/.bash_history``)."""
    if is_within(path, root):
        rel = os.path.relpath(path, root)
        return "/" if rel == "." else "/" + PurePosixPath(*Path(rel).parts).as_posix()
    for drive, base in (volumes or {}).items():
        if is_within(path, base):
            rel = os.path.relpath(path, base)
            return f"{drive}:/" + ("" if rel == "." else PurePosixPath(*Path(rel).parts).as_posix())
    return str(path)


def plan_candidates(
    root: Path,
    os_profile: OsProfile,
    homes: Sequence[str],
    lm_homes: Sequence[str],
    overrides: Sequence[EnvBinding],
    *,
    follow_symlinks: bool = False,
    volumes: Mapping[str, Path] | None = None,
    warnings: list[str] | None = None,
) -> list[Candidate]:
    """Existing files to collect, each claimed by exactly one descriptor."""
    descriptors = catalog_entries(os_profile=os_profile)
    ordered = [d for d in descriptors if not d.is_sweep] + [d for d in descriptors if d.is_sweep]
    claimed: set[Path] = set()
    candidates: list[Candidate] = []
    for d in ordered:
        resolved = resolve_paths(
            d,
            root,
            homes,
            overrides,
            os_profile=os_profile,
            lm_homes=lm_homes,
            volumes=volumes,
            warnings=warnings,
        )
        for path in resolved:
            fence = _fence(path, root, volumes)
            if not os.path.lexists(path):
                continue
            if not stays_within(path, fence, follow_symlinks=follow_symlinks):
                log.debug("not following symlink on the way to %s", path)
                continue
            if path.is_dir():
                if not d.is_directory:
                    continue
                files = walk_files(path, base=fence, follow_symlinks=follow_symlinks)
            elif path.is_file():
                files = [path]
            else:
                continue
            for f in files:
                key = Path(os.path.normpath(f))
                if key in claimed:
                    continue
                claimed.add(key)
                candidates.append(Candidate(d, f, image_label(f, root, volumes)))
    return candidates


# ---------------------------------------------------------------------------
# Collection
# ---------------------------------------------------------------------------


@dataclass
class _Parsed:
    section: str
    items: list[Any]


@dataclass
class _Outcome:
    size: int
    fs_times: FsTimes | None
    digest: Digest | None
    status: FindingStatus
    parsed: _Parsed | None = None
    warnings: list[str] = field(default_factory=list)


_SHELLS = {
    "llamacpp-bash-history": Shell.BASH,
    "llamacpp-zsh-history": Shell.ZSH,
    "llamacpp-powershell-history": Shell.POWERSHELL,
}
_PRESET_SOURCES = {
    "lmstudio-config-presets": PresetSource.USER,
    "lmstudio-hub-presets": PresetSource.HUB,
    "lmstudio-preset-drafts": PresetSource.DRAFT,
}
_MODEL_TOOLS = {
    "ollama-blobs": Tool.OLLAMA,
    "lmstudio-models": Tool.LMSTUDIO,
    "llamacpp-model-files": Tool.LLAMACPP,
}


def _fs_times(st: os.stat_result, record_access: bool) -> FsTimes:
    birth = getattr(st, "st_birthtime", None)
    return FsTimes(
        modified=datetime.fromtimestamp(st.st_mtime, tz=UTC),
        accessed=datetime.fromtimestamp(st.st_atime, tz=UTC) if record_access else None,
        created=datetime.fromtimestamp(birth, tz=UTC) if birth is not None else None,
    )


def _month_of(image: str) -> str | None:
    parts = PurePosixPath(image).parts
    if "server-logs" in parts:
        idx = parts.index("server-logs")
        if idx + 2 < len(parts):
            return parts[idx + 1]
    return None


def _ollama_session(prompts: list[PromptRecord], image: str) -> ChatSession:
    return ChatSession(
        session_id=f"ollama-history:{image}",
        messages=[ChatMessage(role=ChatRole.USER, text=p.text) for p in prompts],
        source_path=image,
        tool=Tool.OLLAMA,
        prompts_only=True,
        flagged=not prompts,
    )


def _parse(
    c: Candidate, host: Path, digest: Digest | None, warnings: list[str]
) -> _Parsed | None:
    """Dispatch on descriptor id; ``None`` means no parser applies."""
    did = c.descriptor.id
    image = c.image
    if did == "ollama-manifests":
        return _Parsed("manifests", [ollama.parse_manifest(host.read_bytes(), image)])
    if did == "ollama-history":
        prompts = ollama.parse_history(host.read_bytes(), image, warnings=warnings)
        return _Parsed("ollama_prompts", [prompts, _ollama_session(prompts, image)])
    if did == "ollama-server-log":
        return _Parsed(
            "server_log_events",
            ollama.parse_server_log(host.read_bytes(), image, warnings=warnings),
        )
    if did in ("ollama-service-unit", "ollama-service-dropins"):
        kind = "service-unit" if did == "ollama-service-unit" else "service-dropin"
        return _Parsed(
            "env_overrides",
            ollama.parse_service_unit(host.read_bytes(), source=image, source_kind=kind),
        )
    if did == "lmstudio-conversations":
        if not host.name.endswith(".json"):
            return None
        return _Parsed("sessions", [lmstudio.parse_conversation(host.read_bytes(), image)])
    if did in _PRESET_SOURCES:
        if not host.name.endswith(".json"):
            return None
        return _Parsed(
            "presets", [lmstudio.parse_preset(host.read_bytes(), _PRESET_SOURCES[did], image)]
        )
    if did == "lmstudio-home-pointer":
        home = str(PurePosixPath(image).parent)
        # already warned about while locating LM Studio homes
        target = lmstudio.resolve_home_pointer(host.read_bytes(), home=home)
        if target is None:
            return None
        return _Parsed("home_pointers", [to_image_path(target) or target])
    if did == "lmstudio-server-logs":
        month = _month_of(image)
        events = ollama.parse_server_log(host.read_bytes(), image, warnings=warnings)
        if month is not None:
            events = [e.model_copy(update={"month_bound": month}) for e in events]
        return _Parsed("server_log_events", events)
    if did in _SHELLS:
        return _Parsed(
            "invocations",
            parse_shell_history(host.read_bytes(), _SHELLS[did], image, warnings=warnings),
        )
    if did in _MODEL_TOOLS:
        with host.open("rb") as f:
            if not gguf.is_gguf(f.read(4)):
                return None
        if digest is None:
            return None
        fp = gguf.fingerprint_file(host, digest)
        return _Parsed(
            "model_files",
            [
                ModelFile(
                    tool=_MODEL_TOOLS[did],
                    descriptor_id=did,
                    path=image,
                    size=host.stat().st_size,
                    fingerprint=fp,
                )
            ],
        )
    return None


class _Collection:
    """Worker and writer callbacks for one scan."""

    def __init__(self, report: ScanReport, options: ScanOptions, custody: CustodyLog) -> None:
        self.report = report
        self.options = options
        self.custody = custody
        self.max_size = options.max_file_size or config.MAX_FILE_SIZE
        self.digests: dict[Path, Digest] = {}

    def work(self, c: Candidate) -> _Outcome:
        warnings: list[str] = []
        try:
            st = c.host.stat() if self.options.follow_symlinks else c.host.lstat()
        except OSError as exc:
            warnings.append(f"{c.image}: cannot stat ({exc})")
            return _Outcome(0, None, None, FindingStatus.CORRUPT, warnings=warnings)
        times = _fs_times(st, self.options.record_access_times)

        digest: Digest | None = None
        if self.options.hash_bulk or c.descriptor.id not in BULK_DESCRIPTORS:
            try:
                digest = hash_file(c.host)
            except (OSError, HashReadError) as exc:
                warnings.append(f"{c.image}: unreadable ({exc})")
                return _Outcome(st.st_size, times, None, FindingStatus.CORRUPT, warnings=warnings)
        else:
            warnings.append(f"{c.image}: content hash skipped (--no-hash-blobs)")

        if st.st_size > self.max_size:
            warnings.append(f"{c.image}: {st.st_size} bytes exceeds max file size; not parsed")
            return _Outcome(
                st.st_size, times, digest, FindingStatus.PRESENT_UNPARSED, None, warnings
            )

        try:
            parsed = _parse(c, c.host, digest, warnings)
        except (ManifestError, ConversationError, GgufError, OSError, ValueError) as exc:
            warnings.append(f"{c.image}: {type(exc).__name__}: {exc}")
            return _Outcome(st.st_size, times, digest, FindingStatus.CORRUPT, None, warnings)
        status = FindingStatus.PARSED if parsed is not None else FindingStatus.PRESENT_UNPARSED
        return _Outcome(st.st_size, times, digest, status, parsed, warnings)

    def sink(self, index: int, c: Candidate, outcome: _Outcome) -> None:
        report = self.report
        report.warnings.extend(outcome.warnings)
        payload_ref = None
        if outcome.parsed is not None:
            section = outcome.parsed.section
            payload_ref = f"{section}:{c.image}"
            if section == "ollama_prompts":
                prompts, session = outcome.parsed.items
                report.ollama_prompts.extend(prompts)
                report.sessions.append(session)
                payload_ref = f"sessions:{c.image}"
            elif section == "env_overrides":
                known = set(report.env_overrides)
                report.env_overrides.extend(b for b in outcome.parsed.items if b not in known)
            elif section == "home_pointers":
                report.home_pointers[c.image] = outcome.parsed.items[0]
            else:
                getattr(report, section).extend(outcome.parsed.items)
        if outcome.digest is not None:
            self.digests[c.host] = outcome.digest
        report.findings.append(
            Finding(
                descriptor_id=c.descriptor.id,
                resolved_path=c.image,
                size=outcome.size,
                digest=outcome.digest,
                fs_times=outcome.fs_times,
                payload_ref=payload_ref,
                status=outcome.status,
            )
        )
        item = outcome.digest or Digest.of(f"unhashed:{c.image}".encode())
        self.custody.append(f"collect {c.descriptor.id} {c.image}", item)


# ---------------------------------------------------------------------------
# Scan
# ---------------------------------------------------------------------------


def scan(
    root: Path,
    os_profile: OsProfile | None = None,
    options: ScanOptions | None = None,
) -> ScanReport:
    """Triage the mounted filesystem at ``root``. ``os_profile=None`` auto-detects."""
    opts = options or ScanOptions()
    root = Path(os.path.abspath(root))
    if not root.is_dir():
        raise ValueError(f"scan root {root} is not a directory")
    if opts.custody_path is not None and is_within(Path(os.path.abspath(opts.custody_path)), root):
        raise ValueError(f"custody log {opts.custody_path} must not live under the scanned root")

    t0 = time.monotonic()
    warnings: list[str] = []
    clock = opts.clock or (lambda: datetime.now(UTC))
    total = 5

    _phase(1, total, "homes and overrides")
    if os_profile is None or os_profile is OsProfile.ANY:
        profile = detect_os_profile(root, warnings=warnings)
    else:
        profile = os_profile
    homes = enumerate_user_homes(root, profile, warnings=warnings)
    lm_homes = lmstudio_homes(root, profile, homes, warnings=warnings)
    overrides = harvest_env_overrides(root, homes, profile, warnings=warnings)
    _phase_done(
        1, total, "homes and overrides",
        f"{profile}, {len(homes)} home(s), {len(lm_homes)} LM Studio home(s), "
        f"{len(overrides)} override(s)",
    )

    report = ScanReport(
        root=str(root),
        os_profile=profile,
        homes=homes,
        lm_homes=lm_homes,
        env_overrides=overrides,
        warnings=warnings,
        scan_time=clock(),
    )

    _phase(2, total, "plan")
    candidates = plan_candidates(
        root, profile, homes, lm_homes, overrides,
        follow_symlinks=opts.follow_symlinks, volumes=opts.volumes, warnings=report.warnings,
    )
    _phase_done(2, total, "plan", f"{len(candidates)} file(s)")

    _phase(3, total, "collect")
    custody = CustodyLog(opts.custody_path, clock=opts.clock)
    collection = _Collection(report, opts, custody)
    ParallelCollector(collection.work, collection.sink, num_workers=opts.workers).collect(
        candidates
    )
    report.custody_digest = custody.head if custody.entries else None
    _phase_done(3, total, "collect", f"{len(report.findings)} finding(s)")

    _phase(4, total, "cross-checks")
    _cross_check(report, root, profile, candidates, collection.digests, opts)
    _phase_done(
        4, total, "cross-checks",
        f"{len(report.blob_verifications)} manifest(s) verified, "
        f"{len(report.sqlite_sightings)} SQLite database(s)",
    )

    _phase(5, total, "installs")
    report.installs = detect_installs(root, profile, homes, lm_homes=lm_homes)
    _phase_done(5, total, "installs", f"{len(report.installs)} item(s)")

    log.info("scan of %s finished in %.1f s", root, time.monotonic() - t0)
    return report


def _cross_check(
    report: ScanReport,
    root: Path,
    profile: OsProfile,
    candidates: Sequence[Candidate],
    digests: Mapping[Path, Digest],
    opts: ScanOptions,
) -> None:
    ci = profile is OsProfile.WINDOWS
    host_of = {c.image: c.host for c in candidates}

    def label(path: Path) -> str:
        return image_label(path, root, opts.volumes)

    fingerprints = {
        host_of[m.path]: m.fingerprint for m in report.model_files if m.path in host_of
    }
    for lm_home in report.lm_homes:
        lm_host = host_path(root, lm_home, case_insensitive=ci)
        report.models.extend(
            lmstudio.enumerate_models(
                lm_host, fingerprint_lookup=fingerprints.get, path_label=label
            )
        )
        report.internal_inventory[lm_home] = lmstudio.inventory_internal(lm_host, path_label=label)

    if report.manifests and not opts.hash_bulk:
        _warn(report.warnings, "blob verification skipped (--no-hash-blobs)")
    elif report.manifests:
        for manifest in report.manifests:
            manifest_host = host_of.get(manifest.source_path)
            if manifest_host is None:
                continue
            report.blob_verifications.append(
                ollama.verify_blobs(
                    manifest,
                    ollama.blobs_dir_for(manifest_host),
                    precomputed=digests,
                    path_label=label,
                )
            )

    refs_by_digest: dict[Digest, list[str]] = {}
    for manifest in report.manifests:
        for digest in manifest.all_digests:
            refs_by_digest.setdefault(digest, []).append(str(manifest.model_ref))
    for model_file in report.model_files:
        if model_file.tool is Tool.OLLAMA and model_file.fingerprint is not None:
            model_file.model_refs = refs_by_digest.get(model_file.fingerprint.file_digest, [])

    report.sqlite_sightings = sqlite_sidecar.detect_sqlite(
        [c.host for c in candidates], path_label=label
    )
