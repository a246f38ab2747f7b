"""Synthetic GGUF files: known metadata in, bytes out.

``synthesize_gguf`` writes only the header and the metadata table; callers
append pseudorandom bytes when they want something that looks like tensor
data behind it.
"""

from __future__ import annotations

import random
import struct
from collections.abc import Mapping
from dataclasses import dataclass, field

from llm_triage.analyzers.gguf import (
    QUANTIZATION_CODES,
    TOKENIZER_VOCAB_KEY,
    GgufType,
    GgufValue,
    serialize_metadata,
)


@dataclass(frozen=True)
class GgufParams:
    version: int = 3
    arch: str | None = "llama"
    context_length: int | None = 4096
    embedding_length: int | None = None
    name: str | None = None
    quantization: str | None = None
    size_label: str | None = None
    tokens: tuple[str, ...] = ()
    tensor_count: int = 0
    extras: Mapping[str, GgufValue] = field(default_factory=dict)


def params_kvs(params: GgufParams) -> dict[str, GgufValue]:
    """The metadata table ``params`` describes, in write order."""
    kvs: dict[str, GgufValue] = {}
    if params.arch is not None:
        kvs["general.architecture"] = GgufValue(GgufType.STRING, params.arch)
    if params.name is not None:
        kvs["general.name"] = GgufValue(GgufType.STRING, params.name)
    if params.size_label is not None:
        kvs["general.size_label"] = GgufValue(GgufType.STRING, params.size_label)
    if params.quantization is not None:
        code = QUANTIZATION_CODES.get(params.quantization)
        if code is None:
            raise ValueError(f"unknown quantization {params.quantization!r}")
        kvs["general.file_type"] = GgufValue(GgufType.UINT32, code)
    if params.arch is not None:
        if params.context_length is not None:
            kvs[f"{params.arch}.context_length"] = GgufValue(
                GgufType.UINT32, params.context_length
            )
        if params.embedding_length is not None:
            kvs[f"{params.arch}.embedding_length"] = GgufValue(
                GgufType.UINT32, params.embedding_length
            )
    if params.tokens:
        kvs[TOKENIZER_VOCAB_KEY] = GgufValue(GgufType.ARRAY, params.tokens, GgufType.STRING)
    kvs.update(params.extras)
    return kvs


def synthesize_gguf(params: GgufParams) -> bytes:
    """Header plus metadata for ``params``.

    No architecture and no extras gives the 24-byte header-only file.
    Versions other than 2 and 3 raise ``ValueError``.
    """
    return serialize_metadata(
        params_kvs(params), version=params.version, tensor_count=params.tensor_count
    )


# ---------------------------------------------------------------------------
# Randomised metadata
# ---------------------------------------------------------------------------

_INT_RANGES: dict[GgufType, tuple[int, int]] = {
    GgufType.UINT8: (0, 2**8 - 1),
    GgufType.INT8: (-(2**7), 2**7 - 1),
    GgufType.UINT16: (0, 2**16 - 1),
    GgufType.INT16: (-(2**15), 2**15 - 1),
    GgufType.UINT32: (0, 2**32 - 1),
    GgufType.INT32: (-(2**31), 2**31 - 1),
    GgufType.UINT64: (0, 2**64 - 1),
    GgufType.INT64: (-(2**63), 2**63 - 1),
}
_ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789 _-.äöü漢字🙂"


def _random_string(rng: random.Random, max_len: int = 24) -> str:
    return "".join(rng.choice(_ALPHABET) for _ in range(rng.randint(0, max_len)))


def _random_scalar(rng: random.Random, vtype: GgufType) -> object:
    if vtype in _INT_RANGES:
        lo, hi = _INT_RANGES[vtype]
        return rng.randint(lo, hi)
    if vtype is GgufType.FLOAT32:
        # round-trip through float32 so parsing gives back the same value
        return struct.unpack("<f", struct.pack("<f", rng.uniform(-1e6, 1e6)))[0]
    if vtype is GgufType.FLOAT64:
        return rng.uniform(-1e12, 1e12)
    if vtype is GgufType.BOOL:
        return rng.random() < 0.5
    return _random_string(rng)


def _random_array(rng: random.Random, depth: int) -> GgufValue:
    choices = list(GgufType) if depth < 2 else [t for t in GgufType if t is not GgufType.ARRAY]
    element = rng.choice(choices)
    count = rng.randint(0, 5)
    if element is GgufType.ARRAY:
        nested = tuple(_random_array(rng, depth + 1) for _ in range(count))
        return GgufValue(GgufType.ARRAY, nested, GgufType.ARRAY)
    return GgufValue(
        GgufType.ARRAY, tuple(_random_scalar(rng, element) for _ in range(count)), element
    )


def random_value(rng: random.Random) -> GgufValue:
    """Any GGUF value; arrays nest at most three deep."""
    vtype = rng.choice(list(GgufType))
    if vtype is GgufType.ARRAY:
        return _random_array(rng, 0)
    return GgufValue(vtype, _random_scalar(rng, vtype))


def random_params(rng: random.Random, *, max_kvs: int = 12) -> GgufParams:
    """Params with a random version, optional identity keys and random extras."""
    arch = rng.choice([None, "llama", "qwen2", "phi3", "gemma"])
    count = rng.randint(0, max_kvs)
    extras = {f"test.key_{i}.{_random_string(rng, 8)}": random_value(rng) for i in range(count)}
    return GgufParams(
        version=rng.choice([2, 3]),
        arch=arch,
        context_length=rng.choice([None, 2048, 4096, 32768]),
        embedding_length=rng.choice([None, 2048, 4096]),
        name=rng.choice([None, "Tiny Test Model", "モデル"]),
        quantization=rng.choice([None, "Q4_K_M", "Q8_0", "F16"]),
        tensor_count=rng.randint(0, 400),
        extras=extras,
    )
