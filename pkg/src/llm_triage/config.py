"""Runtime knobs for llm-triage.

Every value is read from the environment once, at import time. CLI flags
override the module attributes after import (``main`` assigns them), so
library code reads ``config.X`` at call time rather than binding the value
with ``from config import X``.
"""

from __future__ import annotations

import logging
import os

log = logging.getLogger(__name__)

MiB = 1024 * 1024
GiB = 1024 * MiB


def _env_int(name: str, default: int) -> int:
    """Positive integer from ``name``; falls back to ``default`` on junk."""
    raw = os.getenv(name, "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        log.warning("invalid %s=%r, using default %d", name, raw, default)
        return default
    if value <= 0:
        log.warning("non-positive %s=%r, using default %d", name, raw, default)
        return default
    return value


# Files above this size are hashed (streamed) but never handed to an
# in-memory parser.
MAX_FILE_SIZE: int = _env_int("LLMTRIAGE_MAX_FILE_SIZE", 64 * GiB)

# Actor recorded on every chain-of-custody entry.
CUSTODY_ACTOR: str = os.getenv("LLMTRIAGE_ACTOR", "llmtriage").strip() or "llmtriage"

# IANA zone used to localise log timestamps that carry no offset. Unset means
# "treat as UTC"; either way the resulting events are flagged tz-assumed.
LOCAL_TZ: str | None = os.getenv("LLMTRIAGE_LOCAL_TZ", "").strip() or None

# Minimum printable run length (characters) for memory string extraction.
STRING_MIN_LEN: int = _env_int("LLMTRIAGE_STRING_MIN_LEN", 6)

# Maximum number of text samples kept from LM Studio's parsed-documents cache.
INVENTORY_SAMPLES: int = _env_int("LLMTRIAGE_SAMPLES", 32)

# An api-prediction-history pack at least this large marks sustained API use.
PACK_SIZE_THRESHOLD: int = _env_int("LLMTRIAGE_PACK_THRESHOLD", 500 * MiB)

# Read size for raw-image carving and memory string scans.
CARVE_BLOCK_SIZE: int = _env_int("LLMTRIAGE_CARVE_BLOCK", 1 * MiB)

# Read size for SHA-256 streaming.
HASH_CHUNK_SIZE: int = 1 * MiB

# Corruption guard for GGUF metadata keys.
GGUF_MAX_KEY_LEN: int = 64 * 1024

# Corruption guard for nested GGUF arrays.
GGUF_MAX_ARRAY_DEPTH: int = 8
