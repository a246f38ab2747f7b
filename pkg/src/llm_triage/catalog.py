"""Artifact catalog: where each LLM runner leaves evidence, and how much it is worth.

The catalog is plain data (``_CATALOG_DATA``) validated into frozen
:class:`ArtifactDescriptor` records at import time. Path templates use
forward slashes and three placeholders:

* ``{HOME}``        a user profile directory (``/home/alice``, ``/Users/carol``)
* ``{SYSTEM_ROOT}`` the root of the scanned volume
* ``{CUSTOM}``      a location only an environment override can supply

A template ending in ``/`` names a directory whose files are all collected.
A trailing ``**/<pattern>`` component sweeps the directory recursively,
skipping dot-directories (those belong to the runners' own descriptors).
An empty template marks an artifact that never lives on disk (live log
stream, RAM); such descriptors never resolve.
"""

from __future__ import annotations

import fnmatch
import logging
import os
import posixpath
import re
from collections.abc import Mapping, Sequence
from enum import StrEnum
from pathlib import Path, PurePosixPath

from pydantic import BaseModel, ConfigDict, Field, field_validator

log = logging.getLogger(__name__)


class Tool(StrEnum):
    OLLAMA = "Ollama"
    LMSTUDIO = "LMStudio"
    LLAMACPP = "LlamaCpp"
    SYSTEM = "System"


class OsProfile(StrEnum):
    WINDOWS = "Windows"
    LINUX = "Linux"
    ANY = "Any"


class ArtifactFormat(StrEnum):
    JSON = "JSON"
    PLAIN_TEXT = "PlainText"
    BINARY = "Binary"
    GGUF = "GGUF"
    INI = "INI"
    DIRECTORY = "Directory"


class Persistence(StrEnum):
    PERSISTENT = "Persistent"
    SEMI_PERSISTENT = "SemiPersistent"
    VOLATILE = "Volatile"
    EXTREMELY_VOLATILE = "ExtremelyVolatile"


PLACEHOLDERS: frozenset[str] = frozenset({"HOME", "SYSTEM_ROOT", "CUSTOM"})
_PLACEHOLDER_RE = re.compile(r"\{([^{}]*)\}")

# Variables worth harvesting from shell profiles and service units.
ENV_ALLOWLIST: tuple[str, ...] = ("OLLAMA_MODELS", "OLLAMA_HOST", "OLLAMA_DEBUG")

# Prefix shared by every LM Studio template; the scanner re-roots it onto
# each LM Studio home (pointer target plus the default locations).
LMSTUDIO_PREFIX = "{HOME}/.lmstudio"


class ArtifactDescriptor(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str = Field(min_length=1)
    tool: Tool
    os: OsProfile
    category: str
    path_template: str
    format: ArtifactFormat
    persistence: Persistence
    value: int = Field(ge=1, le=5)
    remarks: str

    @field_validator("path_template")
    @classmethod
    def _known_placeholders(cls, v: str) -> str:
        unknown = set(_PLACEHOLDER_RE.findall(v)) - PLACEHOLDERS
        if unknown:
            raise ValueError(f"unknown placeholder(s) {sorted(unknown)} in {v!r}")
        return v

    @property
    def on_disk(self) -> bool:
        return bool(self.path_template)

    @property
    def is_directory(self) -> bool:
        return self.path_template.endswith("/")

    @property
    def is_sweep(self) -> bool:
        return "*" in self.path_template


class EnvBinding(BaseModel):
    """An environment assignment recovered from a profile or service unit.

    ``source`` is the file's path inside the evidence.
    """

    model_config = ConfigDict(frozen=True)

    name: str
    value: str
    source: str
    source_kind: str


# ---------------------------------------------------------------------------
# Catalog data
# ---------------------------------------------------------------------------

_A = OsProfile.ANY
_L = OsProfile.LINUX
_W = OsProfile.WINDOWS

_CATALOG_DATA: tuple[dict[str, object], ...] = (
    # Ollama
    {
        "id": "ollama-manifests", "tool": Tool.OLLAMA, "os": _A, "category": "model-manifests",
        "path_template": "{HOME}/.ollama/models/manifests/", "format": ArtifactFormat.JSON,
        "persistence": Persistence.PERSISTENT, "value": 4,
        "remarks": "Proves which models/versions were downloaded.",
    },
    {
        "id": "ollama-blobs", "tool": Tool.OLLAMA, "os": _A, "category": "model-blobs",
        "path_template": "{HOME}/.ollama/models/blobs/", "format": ArtifactFormat.BINARY,
        "persistence": Persistence.PERSISTENT, "value": 3,
        "remarks": "Confirms presence of model layers via hashing.",
    },
    {
        "id": "ollama-history", "tool": Tool.OLLAMA, "os": _A, "category": "cli-history",
        "path_template": "{HOME}/.ollama/history", "format": ArtifactFormat.PLAIN_TEXT,
        "persistence": Persistence.PERSISTENT, "value": 5,
        "remarks": "Plaintext record of ollama run prompts (user input only).",
    },
    {
        "id": "ollama-server-log", "tool": Tool.OLLAMA, "os": _A, "category": "server-logs",
        "path_template": "{HOME}/.ollama/logs/server.log", "format": ArtifactFormat.PLAIN_TEXT,
        "persistence": Persistence.SEMI_PERSISTENT, "value": 4,
        "remarks": "Records server activity; can be redirected/deleted.",
    },
    {
        "id": "ollama-service-unit", "tool": Tool.OLLAMA, "os": _L, "category": "configuration",
        "path_template": "{SYSTEM_ROOT}/etc/systemd/system/ollama.service",
        "format": ArtifactFormat.INI, "persistence": Persistence.PERSISTENT, "value": 3,
        "remarks": "Reveals non-default paths or network settings. Docker installs keep "
        "data under /var/lib/docker/volumes/ollama/_data (not traversed).",
    },
    {
        "id": "ollama-service-dropins", "tool": Tool.OLLAMA, "os": _L,
        "category": "configuration-dropin",
        "path_template": "{SYSTEM_ROOT}/etc/systemd/system/ollama.service.d/",
        "format": ArtifactFormat.INI, "persistence": Persistence.PERSISTENT, "value": 3,
        "remarks": "systemctl edit overrides; same Environment= semantics as the unit.",
    },
    # LM Studio
    {
        "id": "lmstudio-conversations", "tool": Tool.LMSTUDIO, "os": _A,
        "category": "chat-history", "path_template": "{HOME}/.lmstudio/conversations/",
        "format": ArtifactFormat.JSON, "persistence": Persistence.PERSISTENT, "value": 5,
        "remarks": "Complete, timestamped user/AI conversation logs; "
        "filename stem is epoch milliseconds.",
    },
    {
        "id": "lmstudio-models", "tool": Tool.LMSTUDIO, "os": _A, "category": "model-cache",
        "path_template": "{HOME}/.lmstudio/models/", "format": ArtifactFormat.GGUF,
        "persistence": Persistence.PERSISTENT, "value": 4,
        "remarks": "Stores models; publisher/repo path reveals Hugging Face origin.",
    },
    {
        "id": "lmstudio-config-presets", "tool": Tool.LMSTUDIO, "os": _A,
        "category": "config-presets", "path_template": "{HOME}/.lmstudio/config-presets/",
        "format": ArtifactFormat.JSON, "persistence": Persistence.PERSISTENT, "value": 4,
        "remarks": "Shows user-defined model parameters and intent.",
    },
    {
        "id": "lmstudio-session-cache", "tool": Tool.LMSTUDIO, "os": _A, "category": "rag-cache",
        "path_template": "{HOME}/.lmstudio/.session_cache", "format": ArtifactFormat.BINARY,
        "persistence": Persistence.SEMI_PERSISTENT, "value": 4,
        "remarks": "Contains fragments of documents used in RAG. Listed beside the three "
        ".internal/ RAG directories; none is treated as authoritative.",
    },
    {
        "id": "lmstudio-log-stream", "tool": Tool.LMSTUDIO, "os": _A,
        "category": "application-logs", "path_template": "",
        "format": ArtifactFormat.PLAIN_TEXT, "persistence": Persistence.VOLATILE, "value": 5,
        "remarks": "lms log stream shows the final formatted prompt; live only.",
    },
    {
        "id": "lmstudio-home-pointer", "tool": Tool.LMSTUDIO, "os": _A,
        "category": "home-pointer", "path_template": "{HOME}/.lmstudio-home-pointer",
        "format": ArtifactFormat.PLAIN_TEXT, "persistence": Persistence.PERSISTENT, "value": 4,
        "remarks": "Absolute path of the LM Studio home directory.",
    },
    {
        "id": "lmstudio-hub-models", "tool": Tool.LMSTUDIO, "os": _A,
        "category": "model-cache-hub", "path_template": "{HOME}/.lmstudio/hub/models/",
        "format": ArtifactFormat.DIRECTORY, "persistence": Persistence.PERSISTENT, "value": 4,
        "remarks": "Hub metadata; may outlive the deleted GGUF weights.",
    },
    {
        "id": "lmstudio-hub-presets", "tool": Tool.LMSTUDIO, "os": _A,
        "category": "config-presets-hub", "path_template": "{HOME}/.lmstudio/hub/presets/",
        "format": ArtifactFormat.JSON, "persistence": Persistence.PERSISTENT, "value": 3,
        "remarks": "Synced or community presets.",
    },
    {
        "id": "lmstudio-preset-drafts", "tool": Tool.LMSTUDIO, "os": _A,
        "category": "config-presets-drafts",
        "path_template": "{HOME}/.lmstudio/.internal/config-presets-drafts/",
        "format": ArtifactFormat.JSON, "persistence": Persistence.PERSISTENT, "value": 4,
        "remarks": "In-progress or unsaved preset configurations.",
    },
    {
        "id": "lmstudio-server-logs", "tool": Tool.LMSTUDIO, "os": _A, "category": "server-logs",
        "path_template": "{HOME}/.lmstudio/server-logs/", "format": ArtifactFormat.PLAIN_TEXT,
        "persistence": Persistence.PERSISTENT, "value": 4,
        "remarks": "Month-partitioned (YYYY-MM) local API server logs.",
    },
    {
        "id": "lmstudio-rag-retrieval-sessions", "tool": Tool.LMSTUDIO, "os": _A,
        "category": "rag-retrieval-sessions",
        "path_template": "{HOME}/.lmstudio/.internal/retrieval-sessions/",
        "format": ArtifactFormat.BINARY, "persistence": Persistence.SEMI_PERSISTENT, "value": 4,
        "remarks": "Active RAG session state.",
    },
    {
        "id": "lmstudio-rag-pipeline-chunks", "tool": Tool.LMSTUDIO, "os": _A,
        "category": "rag-pipeline-chunks",
        "path_template": "{HOME}/.lmstudio/.internal/cached-rag-pipeline-chunks/",
        "format": ArtifactFormat.BINARY, "persistence": Persistence.SEMI_PERSISTENT, "value": 4,
        "remarks": "Chunked and vectorised document representations.",
    },
    {
        "id": "lmstudio-rag-parsed-documents", "tool": Tool.LMSTUDIO, "os": _A,
        "category": "rag-parsed-documents",
        "path_template": "{HOME}/.lmstudio/.internal/parsed-documents-cache/",
        "format": ArtifactFormat.BINARY, "persistence": Persistence.SEMI_PERSISTENT, "value": 5,
        "remarks": "Raw text extracted from uploaded documents.",
    },
    {
        "id": "lmstudio-api-prediction-history", "tool": Tool.LMSTUDIO, "os": _A,
        "category": "api-prediction-history",
        "path_template": "{HOME}/.lmstudio/.internal/api-prediction-history/packs/",
        "format": ArtifactFormat.BINARY, "persistence": Persistence.PERSISTENT, "value": 5,
        "remarks": "Every inference request incl. programmatic API calls absent from the UI.",
    },
    {
        "id": "lmstudio-credentials", "tool": Tool.LMSTUDIO, "os": _A, "category": "credentials",
        "path_template": "{HOME}/.lmstudio/credentials/", "format": ArtifactFormat.BINARY,
        "persistence": Persistence.PERSISTENT, "value": 4,
        "remarks": "Hub/external tokens. Hashed only; never copied into reports.",
    },
    {
        "id": "lmstudio-cli-key", "tool": Tool.LMSTUDIO, "os": _A,
        "category": "credentials-cli-key", "path_template": "{HOME}/.lmstudio/.internal/lms-key-2",
        "format": ArtifactFormat.BINARY, "persistence": Persistence.PERSISTENT, "value": 4,
        "remarks": "lms CLI hub authentication key. Hashed only.",
    },
    {
        "id": "lmstudio-user-files", "tool": Tool.LMSTUDIO, "os": _A, "category": "user-files",
        "path_template": "{HOME}/.lmstudio/user-files/", "format": ArtifactFormat.DIRECTORY,
        "persistence": Persistence.PERSISTENT, "value": 4,
        "remarks": "Files attached to chats or fed into RAG.",
    },
    # llama.cpp
    {
        "id": "llamacpp-bash-history", "tool": Tool.LLAMACPP, "os": _A, "category": "cli-history",
        "path_template": "{HOME}/.bash_history", "format": ArtifactFormat.PLAIN_TEXT,
        "persistence": Persistence.VOLATILE, "value": 5,
        "remarks": "Often the only record of prompts and parameters. "
        "Untimed unless HISTTIMEFORMAT was set.",
    },
    {
        "id": "llamacpp-zsh-history", "tool": Tool.LLAMACPP, "os": _L,
        "category": "cli-history-zsh", "path_template": "{HOME}/.zsh_history",
        "format": ArtifactFormat.PLAIN_TEXT, "persistence": Persistence.VOLATILE, "value": 5,
        "remarks": "Extended history carries epoch timestamps per command.",
    },
    {
        "id": "llamacpp-powershell-history", "tool": Tool.LLAMACPP, "os": _W,
        "category": "cli-history-powershell",
        "path_template": "{HOME}/AppData/Roaming/Microsoft/Windows/PowerShell/PSReadLine/"
        "ConsoleHost_history.txt",
        "format": ArtifactFormat.PLAIN_TEXT, "persistence": Persistence.VOLATILE, "value": 5,
        "remarks": "PSReadLine default location.",
    },
    {
        "id": "llamacpp-model-files", "tool": Tool.LLAMACPP, "os": _A, "category": "model-files",
        "path_template": "{HOME}/**/*.gguf", "format": ArtifactFormat.GGUF,
        "persistence": Persistence.PERSISTENT, "value": 3,
        "remarks": "User-defined locations; proves presence of models, metadata is key.",
    },
    {
        "id": "llamacpp-memory", "tool": Tool.LLAMACPP, "os": _A, "category": "memory",
        "path_template": "", "format": ArtifactFormat.BINARY,
        "persistence": Persistence.EXTREMELY_VOLATILE, "value": 5,
        "remarks": "System RAM; may be the only source for interactive-mode prompts.",
    },
    # Raw memory stand-ins that do live on disk
    {
        "id": "system-pagefile", "tool": Tool.SYSTEM, "os": _W, "category": "pagefile",
        "path_template": "{SYSTEM_ROOT}/pagefile.sys", "format": ArtifactFormat.BINARY,
        "persistence": Persistence.VOLATILE, "value": 4,
        "remarks": "Paged-out memory; scan with memscan for prompt strings.",
    },
    {
        "id": "system-swapfile", "tool": Tool.SYSTEM, "os": _L, "category": "swapfile",
        "path_template": "{SYSTEM_ROOT}/swap.img", "format": ArtifactFormat.BINARY,
        "persistence": Persistence.VOLATILE, "value": 4,
        "remarks": "Swapped-out memory; scan with memscan for prompt strings.",
    },
)


def _build_catalog() -> tuple[ArtifactDescriptor, ...]:
    descriptors = [ArtifactDescriptor.model_validate(row) for row in _CATALOG_DATA]
    seen: set[str] = set()
    for d in descriptors:
        if d.id in seen:
            raise ValueError(f"duplicate catalog id {d.id!r}")
        seen.add(d.id)
    return tuple(sorted(descriptors, key=lambda d: d.id))


CATALOG: tuple[ArtifactDescriptor, ...] = _build_catalog()
_BY_ID: dict[str, ArtifactDescriptor] = {d.id: d for d in CATALOG}

# Environment variables that add candidate locations, per descriptor.
_OVERRIDE_TEMPLATES: dict[str, dict[str, str]] = {
    "OLLAMA_MODELS": {
        "ollama-manifests": "{CUSTOM}/manifests/",
        "ollama-blobs": "{CUSTOM}/blobs/",
    },
}


def catalog_entries(
    tool: Tool | None = None, os_profile: OsProfile | None = None
) -> list[ArtifactDescriptor]:
    """Descriptors ordered by id. Filters are conjunctive.

    An OS filter keeps descriptors for that OS plus the ``Any`` ones;
    filtering on ``Any`` itself keeps everything.
    """
    out = []
    for d in CATALOG:
        if tool is not None and d.tool is not tool:
            continue
        if (
            os_profile is not None
            and os_profile is not OsProfile.ANY
            and d.os not in (os_profile, OsProfile.ANY)
        ):
            continue
        out.append(d)
    return out


def get_descriptor(descriptor_id: str) -> ArtifactDescriptor:
    try:
        return _BY_ID[descriptor_id]
    except KeyError:
        raise ValueError(f"unknown descriptor id {descriptor_id!r}") from None


# ---------------------------------------------------------------------------
# Path mapping
# ---------------------------------------------------------------------------

_DRIVE_RE = re.compile(r"^([A-Za-z]):(?:[\\/]|$)")


def to_image_path(value: str) -> str | None:
    """Normalise an absolute path as written on the subject system.

    ``C:\\Users\\bob`` becomes ``/Users/bob`` (drive dropped), ``/srv/x``
    stays. Relative paths return ``None``.
    """
    m = _DRIVE_RE.match(value)
    if m:
        rest = value[2:].replace("\\", "/")
        return posixpath.normpath("/" + rest.lstrip("/"))
    if value.startswith("/"):
        return posixpath.normpath(value)
    return None


def drive_of(value: str) -> str | None:
    m = _DRIVE_RE.match(value)
    return m.group(1).upper() if m else None


def host_path(root: Path, image_path: str, *, case_insensitive: bool = False) -> Path:
    """Map a path inside the evidence onto the host mount at ``root``.

    With ``case_insensitive`` each component is matched against the real
    directory listing; components that do not exist keep their spelling.
    """
    parts = [p for p in PurePosixPath(image_path).parts if p not in ("/", "")]
    current = root
    matching = case_insensitive
    for part in parts:
        candidate = current / part
        if matching and not os.path.lexists(candidate):
            match = _casefold_child(current, part)
            if match is None:
                matching = False
            else:
                candidate = match
        current = candidate
    return current


def _casefold_child(directory: Path, name: str) -> Path | None:
    try:
        entries = sorted(os.listdir(directory))
    except OSError:
        return None
    folded = name.casefold()
    for entry in entries:
        if entry.casefold() == folded:
            return directory / entry
    return None


def is_within(path: Path, root: Path) -> bool:
    norm = os.path.normpath(path)
    base = os.path.normpath(root)
    return norm == base or norm.startswith(base.rstrip(os.sep) + os.sep)


def has_symlink_below(path: Path, base: Path) -> bool:
    """True when any component of ``path`` under ``base`` is a symlink (``path`` included)."""
    try:
        rel = Path(os.path.relpath(os.path.normpath(path), os.path.normpath(base)))
    except ValueError:
        return True
    current = Path(os.path.normpath(base))
    for part in rel.parts:
        if part in (".", ""):
            continue
        current = current / part
        if current.is_symlink():
            return True
    return False


def stays_within(path: Path, base: Path, *, follow_symlinks: bool = False) -> bool:
    """Containment that holds on disk, not just in the path string.

    Without ``follow_symlinks`` no component below ``base`` may be a link.
    Either way the fully resolved path must remain under the resolved base.
    """
    if not is_within(path, base):
        return False
    if not follow_symlinks and has_symlink_below(path, base):
        return False
    return is_within(Path(os.path.realpath(path)), Path(os.path.realpath(base)))


def walk_files(
    directory: Path,
    pattern: str = "*",
    *,
    base: Path | None = None,
    follow_symlinks: bool = False,
) -> list[Path]:
    """Regular files under ``directory`` whose name matches ``pattern``, in walk order.

    Nothing is returned from below a symlink unless ``follow_symlinks``, and
    nothing that resolves outside ``base`` (default: ``directory``).
    """
    fence = base if base is not None else directory
    if not directory.is_dir() or not stays_within(
        directory, fence, follow_symlinks=follow_symlinks
    ):
        return []
    fence_real = Path(os.path.realpath(fence))
    hits: list[Path] = []
    for dirpath, dirnames, filenames in os.walk(directory, followlinks=follow_symlinks):
        dirnames.sort()
        for name in sorted(filenames):
            if not fnmatch.fnmatchcase(name, pattern):
                continue
            path = Path(dirpath) / name
            if path.is_symlink() and not follow_symlinks:
                continue
            if not path.is_file() or not is_within(Path(os.path.realpath(path)), fence_real):
                continue
            hits.append(path)
    return hits


def map_under_root(
    value: str,
    root: Path,
    *,
    volumes: Mapping[str, Path] | None = None,
) -> Path | None:
    """Map an absolute subject-system path to a host path.

    A drive letter listed in ``volumes`` maps onto that host directory;
    any other absolute path lands under ``root``. ``None`` when the value is
    relative or tries to climb out of its base.
    """
    image = to_image_path(value)
    if image is None:
        return None
    drive = drive_of(value)
    base = root
    if drive is not None and volumes and drive in volumes:
        base = volumes[drive]
    mapped = Path(os.path.normpath(base / image.lstrip("/")))
    if not is_within(mapped, base):
        return None
    return mapped


# ---------------------------------------------------------------------------
# Template resolution
# ---------------------------------------------------------------------------


def _expand(template: str, home: str | None, custom: str | None) -> str | None:
    """Substitute placeholders; ``None`` if one stays unresolved."""
    out = template
    if "{SYSTEM_ROOT}" in out:
        out = out.replace("{SYSTEM_ROOT}", "")
    if "{HOME}" in out:
        if home is None:
            return None
        out = out.replace("{HOME}", home.rstrip("/"))
    if "{CUSTOM}" in out:
        if custom is None:
            return None
        out = out.replace("{CUSTOM}", custom.rstrip("/"))
    return out


def _sweep(base: Path, pattern: str, case_insensitive: bool) -> list[Path]:
    """Files under ``base`` whose name matches ``pattern``; no dot-dirs, no symlinks."""
    if not base.is_dir() or base.is_symlink():
        return []
    pat = pattern.casefold() if case_insensitive else pattern
    hits: list[Path] = []
    for dirpath, dirnames, filenames in os.walk(base, followlinks=False):
        dirnames[:] = sorted(d for d in dirnames if not d.startswith("."))
        for name in sorted(filenames):
            folded = name.casefold() if case_insensitive else name
            if fnmatch.fnmatchcase(folded, pat):
                hits.append(Path(dirpath) / name)
    return hits


def _materialise(image_path: str, base: Path, case_insensitive: bool) -> list[Path]:
    """Turn one expanded image path into host candidates under ``base``."""
    if "**/" in image_path:
        head, _, pattern = image_path.partition("**/")
        start = host_path(base, head, case_insensitive=case_insensitive)
        return _sweep(start, pattern, case_insensitive)
    return [host_path(base, image_path, case_insensitive=case_insensitive)]


def resolve_paths(
    d: ArtifactDescriptor,
    root: Path,
    homes: Sequence[str],
    overrides: Sequence[EnvBinding] = (),
    *,
    os_profile: OsProfile | None = None,
    lm_homes: Sequence[str] | None = None,
    volumes: Mapping[str, Path] | None = None,
    warnings: list[str] | None = None,
) -> list[Path]:
    """Concrete host-side candidates for ``d`` (existence is not checked).

    One candidate per home for ``{HOME}`` templates, one for
    ``{SYSTEM_ROOT}`` templates, plus one per matching override. LM Studio
    templates are re-rooted onto ``lm_homes`` when given. Sweep templates
    return the matching files instead. Windows profiles match names
    case-insensitively. Candidates that would escape the root are dropped.
    """
    if not d.on_disk:
        return []
    case_insensitive = os_profile is OsProfile.WINDOWS
    expanded: list[tuple[str, Path]] = []

    if "{CUSTOM}" in d.path_template:
        if warnings is not None:
            warnings.append(f"{d.id}: template needs {{CUSTOM}} and no override supplies it")
        log.warning("skipping %s: unresolved {CUSTOM} placeholder", d.id)
        return []

    if "{HOME}" in d.path_template:
        if (
            lm_homes is not None
            and d.tool is Tool.LMSTUDIO
            and d.path_template.startswith(LMSTUDIO_PREFIX + "/")
        ):
            suffix = d.path_template[len(LMSTUDIO_PREFIX) :]
            for lm_home in lm_homes:
                expanded.append((lm_home.rstrip("/") + suffix, root))
        else:
            for home in homes:
                path = _expand(d.path_template, home, None)
                if path is not None:
                    expanded.append((path, root))
    else:
        path = _expand(d.path_template, None, None)
        if path is not None:
            expanded.append((path, root))

    for binding in overrides:
        template = _OVERRIDE_TEMPLATES.get(binding.name, {}).get(d.id)
        if template is None:
            continue
        image = to_image_path(binding.value)
        if image is None:
            if warnings is not None:
                warnings.append(
                    f"{binding.name}={binding.value!r} from {binding.source} is not absolute"
                )
            continue
        drive = drive_of(binding.value)
        base = volumes[drive] if drive is not None and volumes and drive in volumes else root
        path = _expand(template, None, image)
        if path is not None:
            expanded.append((path, base))

    candidates: list[Path] = []
    seen: set[str] = set()
    for image_path, base in expanded:
        normalised = posixpath.normpath(image_path)
        if image_path.endswith("/") and not normalised.endswith("/"):
            normalised += "/"
        for candidate in _materialise(normalised, base, case_insensitive):
            if not stays_within(candidate, base, follow_symlinks=True):
                if warnings is not None:
                    warnings.append(f"{d.id}: candidate {image_path!r} escapes the scanned root")
                continue
            key = os.path.normcase(os.path.normpath(candidate))
            if case_insensitive:
                key = key.casefold()
            if key in seen:
                continue
            seen.add(key)
            candidates.append(candidate)
    return candidates
