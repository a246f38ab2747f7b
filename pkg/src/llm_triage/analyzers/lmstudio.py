"""LM Studio artifacts: home pointer, conversations, model caches, presets, logs, internals.

Conversation and preset documents have no stable schema across LM Studio
releases, so both are read by key heuristics over the whole JSON tree rather
than by a fixed model.
"""

from __future__ import annotations

import json
import logging
import posixpath
from collections import deque
from collections.abc import Callable, Iterator
from datetime import datetime
from enum import StrEnum
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field

from llm_triage import config
from llm_triage.analyzers.gguf import GgufError, ModelFingerprint, fingerprint_file, is_gguf
from llm_triage.analyzers.ollama import ServerLogEvent, parse_server_log
from llm_triage.carver import extract_strings
from llm_triage.catalog import Tool, stays_within, to_image_path, walk_files
from llm_triage.errors import TriageError
from llm_triage.evidence import Digest, hash_file
from llm_triage.timestamps import from_epoch_ms, parse_month, parse_timestamp, to_epoch_ms

log = logging.getLogger(__name__)


class ConversationError(TriageError, ValueError):
    """The conversation document is not JSON."""


def _warn(warnings: list[str] | None, message: str) -> None:
    log.warning(message)
    if warnings is not None:
        warnings.append(message)


# ---------------------------------------------------------------------------
# Home pointer
# ---------------------------------------------------------------------------


def resolve_home_pointer(
    data: bytes, *, home: str | None = None, warnings: list[str] | None = None
) -> str | None:
    """LM Studio home named by ``.lmstudio-home-pointer``.

    The content is returned trimmed and otherwise verbatim (a Windows path
    stays a Windows path). Empty or multi-line content yields ``None``; a
    relative path is joined onto ``home``.
    """
    text = data.decode("utf-8", errors="replace").strip()
    if not text:
        _warn(warnings, "LM Studio home pointer is empty; using default homes")
        return None
    if "\n" in text or "\r" in text:
        _warn(warnings, "LM Studio home pointer has several lines; using default homes")
        return None
    if to_image_path(text) is None:
        if home is None:
            _warn(warnings, f"LM Studio home pointer {text!r} is relative; ignored")
            return None
        joined = posixpath.normpath(posixpath.join(home, text.replace("\\", "/")))
        _warn(warnings, f"LM Studio home pointer {text!r} is relative; resolved to {joined}")
        return joined
    return text


# ---------------------------------------------------------------------------
# Conversations
# ---------------------------------------------------------------------------


class ChatRole(StrEnum):
    USER = "User"
    ASSISTANT = "Assistant"
    SYSTEM = "System"
    UNKNOWN = "Unknown"


class ChatMessage(BaseModel):
    role: ChatRole
    text: str
    timestamp: datetime | None = None
    model_id: str | None = None


class ChatSession(BaseModel):
    session_id: str
    created_at: datetime | None = None
    messages: list[ChatMessage] = []
    config: Any = None
    source_path: str
    title: str | None = None
    tool: Tool = Tool.LMSTUDIO
    # Only user input survives (Ollama CLI history).
    prompts_only: bool = False
    # Parsed, but no message was recognised.
    flagged: bool = False


_ROLE_KEYS = ("role", "sender", "from")
_TEXT_KEYS = ("content", "text", "message")
_MODEL_KEYS = (
    "modelIdentifier", "model", "modelId", "model_id", "senderName", "identifier",
    "lastUsedModel",
)
_TIME_KEYS = ("timestamp", "createdAt", "created_at", "time")
_CONFIG_KEYS = ("preset", "config")
_ROLE_MAP = {
    "user": ChatRole.USER,
    "human": ChatRole.USER,
    "assistant": ChatRole.ASSISTANT,
    "ai": ChatRole.ASSISTANT,
    "bot": ChatRole.ASSISTANT,
    "model": ChatRole.ASSISTANT,
    "system": ChatRole.SYSTEM,
}


def _session_stem(name: str) -> str:
    stem = name.removesuffix(".json")
    return stem.removesuffix(".conversation")


def decode_session_filename(name: str) -> datetime | None:
    """Creation time from a ``<epoch-ms>.json`` (or ``.conversation.json``) name."""
    stem = _session_stem(name)
    if not stem or not (stem.isascii() and stem.isdigit()):
        return None
    return from_epoch_ms(int(stem))


def session_stem(created_at: datetime) -> str:
    """Inverse of :func:`decode_session_filename` for whole milliseconds."""
    return str(to_epoch_ms(created_at))


def _flatten_text(value: Any) -> str | None:
    """A string, or the textual segments of a content array joined in order."""
    if isinstance(value, str):
        return value
    if isinstance(value, list):
        parts: list[str] = []
        found = False
        for segment in value:
            if isinstance(segment, str):
                parts.append(segment)
                found = True
            elif isinstance(segment, dict):
                seg_type = segment.get("type")
                if seg_type not in (None, "text") and "text" not in segment:
                    continue
                inner = _flatten_text(segment.get("text", segment.get("content")))
                if inner is not None:
                    parts.append(inner)
                    found = True
        return "".join(parts) if found else None
    if isinstance(value, dict):
        return _flatten_text(value.get("text", value.get("content")))
    return None


def _message_text(node: dict[str, Any]) -> str | None:
    for key in _TEXT_KEYS:
        if key in node:
            text = _flatten_text(node[key])
            if text is not None:
                return text
    steps = node.get("steps")
    if isinstance(steps, list):
        texts = [t for step in steps if (t := _flatten_text(step)) is not None]
        if texts:
            return "".join(texts)
    return None


def _role_of(node: dict[str, Any]) -> ChatRole | None:
    for key in _ROLE_KEYS:
        value = node.get(key)
        if isinstance(value, str):
            return _ROLE_MAP.get(value.strip().casefold(), ChatRole.UNKNOWN)
    return None


def _model_of(node: Any) -> str | None:
    """Nearest model-like string key, breadth-first."""
    queue: deque[Any] = deque([node])
    while queue:
        current = queue.popleft()
        if isinstance(current, dict):
            for key in _MODEL_KEYS:
                value = current.get(key)
                if isinstance(value, str) and value:
                    return value
            queue.extend(current.values())
        elif isinstance(current, list):
            queue.extend(current)
    return None


def _time_of(node: dict[str, Any]) -> datetime | None:
    for key in _TIME_KEYS:
        value = node.get(key)
        if isinstance(value, bool):
            continue
        if isinstance(value, int | float):
            return from_epoch_ms(int(value))
        if isinstance(value, str):
            dt = parse_timestamp(value)
            if dt is not None and dt.tzinfo is not None:
                return dt
    return None


def _own_model(node: dict[str, Any]) -> str | None:
    for key in _MODEL_KEYS:
        value = node.get(key)
        if isinstance(value, str) and value:
            return value
    return None


def _iter_messages(node: Any, ancestor_model: str | None = None) -> Iterator[ChatMessage]:
    """Message-like objects in document order."""
    if isinstance(node, list):
        for item in node:
            yield from _iter_messages(item, ancestor_model)
        return
    if not isinstance(node, dict):
        return
    role = _role_of(node)
    if role is not None:
        text = _message_text(node)
        if text is not None:
            yield ChatMessage(
                role=role,
                text=text,
                timestamp=_time_of(node),
                model_id=_model_of(node) or ancestor_model,
            )
            return
    model = _own_model(node) or ancestor_model
    for key, value in node.items():
        if key in _CONFIG_KEYS:
            continue
        yield from _iter_messages(value, model)


def parse_conversation(document: bytes, source_path: str) -> ChatSession:
    """Recover a chat session from one conversation JSON file."""
    name = posixpath.basename(source_path.replace("\\", "/"))
    try:
        doc = json.loads(document)
    except (UnicodeDecodeError, ValueError) as exc:
        raise ConversationError(f"{source_path}: not JSON ({exc})") from None
    messages = list(_iter_messages(doc))
    snapshot = None
    title = None
    if isinstance(doc, dict):
        snapshot = next((doc[k] for k in _CONFIG_KEYS if k in doc), None)
        raw_title = doc.get("name", doc.get("title"))
        title = raw_title if isinstance(raw_title, str) else None
    session = ChatSession(
        session_id=_session_stem(name),
        created_at=decode_session_filename(name),
        messages=messages,
        config=snapshot,
        source_path=source_path,
        title=title,
        flagged=not messages,
    )
    if session.flagged:
        log.warning("conversation %s holds no recognisable messages", source_path)
    return session


# ---------------------------------------------------------------------------
# Model caches
# ---------------------------------------------------------------------------


class ModelTree(StrEnum):
    WEIGHTS = "WeightsTree"
    HUB = "HubTree"


class ModelCacheEntry(BaseModel):
    publisher: str
    repo: str
    file_name: str
    size: int
    gguf_fingerprint: ModelFingerprint | None = None
    tree: ModelTree
    path: str


def enumerate_models(
    lm_home: Path,
    *,
    fingerprint_lookup: Callable[[Path], ModelFingerprint | None] | None = None,
    path_label: Callable[[Path], str] = str,
) -> list[ModelCacheEntry]:
    """Weights under ``models/<publisher>/<repo>/`` plus ``hub/models/<publisher>/<model>/``.

    Hub entries are listed whether or not any weights remain.
    ``fingerprint_lookup`` lets a caller reuse fingerprints it already has.
    """
    entries: list[ModelCacheEntry] = []
    weights = lm_home / "models"
    if weights.is_dir():
        for path in sorted(walk_files(weights, "*.gguf", base=lm_home)):
            rel = path.relative_to(weights).parts
            if len(rel) < 3:
                continue
            fp = fingerprint_lookup(path) if fingerprint_lookup else None
            if fp is None:
                fp = _fingerprint_quietly(path)
            entries.append(
                ModelCacheEntry(
                    publisher=rel[0],
                    repo=rel[1],
                    file_name=path.name,
                    size=path.stat().st_size,
                    gguf_fingerprint=fp,
                    tree=ModelTree.WEIGHTS,
                    path=path_label(path),
                )
            )
    hub = lm_home / "hub" / "models"
    if hub.is_dir():
        for model_dir in sorted(p for p in hub.glob("*/*") if p.is_dir()):
            if not stays_within(model_dir, lm_home):
                continue
            files = sorted(walk_files(model_dir, base=lm_home))
            entries.append(
                ModelCacheEntry(
                    publisher=model_dir.parent.name,
                    repo=model_dir.name,
                    file_name=files[0].name if files else "",
                    size=sum(f.stat().st_size for f in files),
                    tree=ModelTree.HUB,
                    path=path_label(model_dir),
                )
            )
    return entries


def _fingerprint_quietly(path: Path) -> ModelFingerprint | None:
    try:
        with path.open("rb") as f:
            if not is_gguf(f.read(4)):
                return None
        return fingerprint_file(path)
    except (GgufError, OSError) as exc:
        log.warning("cannot fingerprint %s: %s", path, exc)
        return None


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


class PresetSource(StrEnum):
    HUB = "Hub"
    USER = "User"
    DRAFT = "Draft"


class NotableFields(BaseModel):
    system_prompt: str | None = None
    temperature: float | None = None
    context_length: int | None = None


class PresetRecord(BaseModel):
    name: str
    source: PresetSource
    source_path: str
    fields: Any = None
    notable: NotableFields = Field(default_factory=NotableFields)
    corrupt: bool = False


PRESET_DIRS: tuple[tuple[str, PresetSource], ...] = (
    ("hub/presets", PresetSource.HUB),
    ("config-presets", PresetSource.USER),
    (".internal/config-presets-drafts", PresetSource.DRAFT),
)

_NOTABLE_KEYS = {
    "systemprompt": "system_prompt",
    "system_prompt": "system_prompt",
    "temperature": "temperature",
    "contextlength": "context_length",
    "context_length": "context_length",
}


def _notable_name(key: str) -> str | None:
    # LM Studio field lists use dotted keys such as "llm.prediction.systemPrompt"
    leaf = key.rsplit(".", 1)[-1]
    return _NOTABLE_KEYS.get(leaf.casefold()) or _NOTABLE_KEYS.get(leaf)


def _collect_notable(node: Any, found: dict[str, Any]) -> None:
    if isinstance(node, dict):
        key = node.get("key")
        if isinstance(key, str) and "value" in node:
            name = _notable_name(key)
            if name is not None:
                found.setdefault(name, node["value"])
        for k, v in node.items():
            name = _notable_name(k)
            if name is not None and not isinstance(v, dict | list):
                found.setdefault(name, v)
            _collect_notable(v, found)
    elif isinstance(node, list):
        for item in node:
            _collect_notable(item, found)


def _notable(doc: Any) -> NotableFields:
    found: dict[str, Any] = {}
    _collect_notable(doc, found)
    prompt = found.get("system_prompt")
    temp = found.get("temperature")
    ctx = found.get("context_length")
    return NotableFields(
        system_prompt=prompt if isinstance(prompt, str) else None,
        temperature=float(temp) if isinstance(temp, int | float) and not isinstance(temp, bool)
        else None,
        context_length=int(ctx) if isinstance(ctx, int) and not isinstance(ctx, bool) else None,
    )


def parse_preset(
    data: bytes, source: PresetSource, source_path: str, name: str | None = None
) -> PresetRecord:
    preset_name = name or posixpath.basename(source_path).removesuffix(".json")
    try:
        doc = json.loads(data)
    except (UnicodeDecodeError, ValueError):
        log.warning("preset %s is not JSON", source_path)
        return PresetRecord(name=preset_name, source=source, source_path=source_path, corrupt=True)
    if isinstance(doc, dict) and isinstance(doc.get("name"), str):
        preset_name = doc["name"]
    return PresetRecord(
        name=preset_name, source=source, source_path=source_path, fields=doc, notable=_notable(doc)
    )


def parse_presets(
    lm_home: Path, *, path_label: Callable[[Path], str] = str
) -> list[PresetRecord]:
    records: list[PresetRecord] = []
    for rel, source in PRESET_DIRS:
        directory = lm_home / rel
        if not directory.is_dir():
            continue
        for path in sorted(walk_files(directory, "*.json", base=lm_home)):
            records.append(parse_preset(path.read_bytes(), source, path_label(path)))
    return records


# ---------------------------------------------------------------------------
# Server logs
# ---------------------------------------------------------------------------


def parse_server_logs(
    lm_home: Path,
    *,
    path_label: Callable[[Path], str] = str,
    warnings: list[str] | None = None,
) -> list[ServerLogEvent]:
    """Events from ``server-logs/<YYYY-MM>/*``, month directories in lexical order."""
    logs_dir = lm_home / "server-logs"
    if not logs_dir.is_dir():
        return []
    events: list[ServerLogEvent] = []
    for month_dir in sorted(p for p in logs_dir.iterdir() if p.is_dir()):
        if not stays_within(month_dir, lm_home):
            continue
        month = month_dir.name
        if parse_month(month) is None:
            _warn(warnings, f"{path_label(month_dir)}: not a YYYY-MM month directory")
            bound = None
        else:
            bound = month
        for path in sorted(walk_files(month_dir, base=lm_home)):
            label = path_label(path)
            for event in parse_server_log(path.read_bytes(), label, warnings=warnings):
                events.append(event.model_copy(update={"month_bound": bound}))
    return events


# ---------------------------------------------------------------------------
# Internal directories
# ---------------------------------------------------------------------------

# Inventory key -> path relative to the LM Studio home.
INTERNAL_DIRS: dict[str, str] = {
    "retrieval_sessions": ".internal/retrieval-sessions",
    "cached_rag_pipeline_chunks": ".internal/cached-rag-pipeline-chunks",
    "parsed_documents_cache": ".internal/parsed-documents-cache",
    "api_prediction_history_packs": ".internal/api-prediction-history/packs",
    "credentials": "credentials",
    "lms_key_2": ".internal/lms-key-2",
    "user_files": "user-files",
    "session_cache": ".session_cache",
}
_HASHED_ONLY = frozenset({"credentials", "lms_key_2"})


class FileDigest(BaseModel):
    path: str
    digest: Digest


class DirRecord(BaseModel):
    present: bool = False
    file_count: int = 0
    total_bytes: int = 0
    largest_file: int = 0
    extracted_text_samples: list[str] | None = None
    # credentials / lms-key-2: contents are represented by digest only
    digests: list[FileDigest] | None = None


class InternalInventory(BaseModel):
    lm_home: str
    retrieval_sessions: DirRecord = Field(default_factory=DirRecord)
    cached_rag_pipeline_chunks: DirRecord = Field(default_factory=DirRecord)
    parsed_documents_cache: DirRecord = Field(default_factory=DirRecord)
    api_prediction_history_packs: DirRecord = Field(default_factory=DirRecord)
    credentials: DirRecord = Field(default_factory=DirRecord)
    lms_key_2: DirRecord = Field(default_factory=DirRecord)
    user_files: DirRecord = Field(default_factory=DirRecord)
    session_cache: DirRecord = Field(default_factory=DirRecord)
    # API activity that never shows up in the chat UI.
    sustained_api_usage: bool = False


def _files_of(path: Path, lm_home: Path) -> list[Path]:
    if path.is_file():
        return [path] if stays_within(path, lm_home) else []
    if path.is_dir():
        return sorted(walk_files(path, base=lm_home))
    return []


def _sample_strings(files: list[Path], limit: int) -> list[str]:
    samples: list[str] = []
    seen: set[str] = set()
    for path in files:
        with path.open("rb") as f:
            for hit in extract_strings(f):
                text = hit.text.strip()
                if not text or text in seen:
                    continue
                seen.add(text)
                samples.append(text)
                if len(samples) >= limit:
                    return samples
    return samples


def inventory_internal(
    lm_home: Path,
    *,
    samples: int | None = None,
    threshold: int | None = None,
    path_label: Callable[[Path], str] = str,
) -> InternalInventory:
    limit = samples if samples is not None else config.INVENTORY_SAMPLES
    pack_threshold = threshold if threshold is not None else config.PACK_SIZE_THRESHOLD
    inventory = InternalInventory(lm_home=path_label(lm_home))
    for key, rel in INTERNAL_DIRS.items():
        target = lm_home / rel
        files = _files_of(target, lm_home)
        sizes = [f.stat().st_size for f in files]
        record = DirRecord(
            present=target.exists(),
            file_count=len(files),
            total_bytes=sum(sizes),
            largest_file=max(sizes, default=0),
        )
        if key == "parsed_documents_cache":
            record.extracted_text_samples = _sample_strings(files, limit) if files else []
        if key in _HASHED_ONLY and files:
            record.digests = [FileDigest(path=path_label(f), digest=hash_file(f)) for f in files]
        setattr(inventory, key, record)
    packs = inventory.api_prediction_history_packs
    inventory.sustained_api_usage = packs.present and packs.largest_file >= pack_threshold
    if inventory.sustained_api_usage:
        log.info("api-prediction-history pack of %d bytes: sustained API usage", packs.largest_file)
    return inventory


# ---------------------------------------------------------------------------
# Whole-home analysis (CLI)
# ---------------------------------------------------------------------------


class LmStudioHomeReport(BaseModel):
    home: str
    sessions: list[ChatSession] = []
    models: list[ModelCacheEntry] = []
    presets: list[PresetRecord] = []
    server_log_events: list[ServerLogEvent] = []
    inventory: InternalInventory
    warnings: list[str] = []


def analyze_home(lm_home: Path, *, samples: int | None = None) -> LmStudioHomeReport:
    warnings: list[str] = []
    sessions: list[ChatSession] = []
    conversations = lm_home / "conversations"
    if conversations.is_dir():
        for path in sorted(walk_files(conversations, "*.json", base=lm_home)):
            try:
                sessions.append(parse_conversation(path.read_bytes(), str(path)))
            except (ConversationError, OSError) as exc:
                warnings.append(f"{path}: {exc}")
    return LmStudioHomeReport(
        home=str(lm_home),
        sessions=sessions,
        models=enumerate_models(lm_home),
        presets=parse_presets(lm_home),
        server_log_events=parse_server_logs(lm_home, warnings=warnings),
        inventory=inventory_internal(lm_home, samples=samples),
        warnings=warnings,
    )
