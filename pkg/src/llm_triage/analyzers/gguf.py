"""GGUF header and metadata reader/writer, plus model fingerprints.

Wire layout (little-endian)::

    magic "GGUF" | u32 version | u64 tensor_count | u64 kv_count
    kv_count x ( string key | u32 type | value )

    string = u64 length + UTF-8 bytes
    array  = u32 element type + u64 count + elements

Tensor descriptors and tensor data follow the metadata; the reader stops
before them and never touches weights. Allocation is bounded by the bytes
actually left in the stream, so a corrupt length cannot make the reader
allocate more than the file holds.
"""

from __future__ import annotations

import io
import logging
import os
import struct
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import IO, Any

from pydantic import BaseModel, ConfigDict

from llm_triage import config
from llm_triage.errors import TriageError
from llm_triage.evidence import Digest, hash_file

log = logging.getLogger(__name__)

MAGIC = b"GGUF"
SUPPORTED_VERSIONS: frozenset[int] = frozenset({2, 3})
HEADER_SIZE = 24
# Strings longer than this are treated as corruption (chat templates and
# licence texts run to kilobytes, not hundreds of megabytes).
MAX_STRING_LEN = 16 * 1024 * 1024
_READ_CHUNK = 1024 * 1024


class GgufType(IntEnum):
    UINT8 = 0
    INT8 = 1
    UINT16 = 2
    INT16 = 3
    UINT32 = 4
    INT32 = 5
    FLOAT32 = 6
    BOOL = 7
    STRING = 8
    ARRAY = 9
    UINT64 = 10
    INT64 = 11
    FLOAT64 = 12


_SCALAR_FORMATS: dict[GgufType, str] = {
    GgufType.UINT8: "<B",
    GgufType.INT8: "<b",
    GgufType.UINT16: "<H",
    GgufType.INT16: "<h",
    GgufType.UINT32: "<I",
    GgufType.INT32: "<i",
    GgufType.FLOAT32: "<f",
    GgufType.BOOL: "<?",
    GgufType.UINT64: "<Q",
    GgufType.INT64: "<q",
    GgufType.FLOAT64: "<d",
}

INTEGER_TYPES: frozenset[GgufType] = frozenset(
    {
        GgufType.UINT8,
        GgufType.INT8,
        GgufType.UINT16,
        GgufType.INT16,
        GgufType.UINT32,
        GgufType.INT32,
        GgufType.UINT64,
        GgufType.INT64,
    }
)

# llama_ftype codes as written to general.file_type.
QUANTIZATION_LABELS: dict[int, str] = {
    0: "F32",
    1: "F16",
    2: "Q4_0",
    3: "Q4_1",
    4: "Q4_1_SOME_F16",
    7: "Q8_0",
    8: "Q5_0",
    9: "Q5_1",
    10: "Q2_K",
    11: "Q3_K_S",
    12: "Q3_K_M",
    13: "Q3_K_L",
    14: "Q4_K_S",
    15: "Q4_K_M",
    16: "Q5_K_S",
    17: "Q5_K_M",
    18: "Q6_K",
    19: "IQ2_XXS",
    20: "IQ2_XS",
    21: "Q2_K_S",
    22: "IQ3_XS",
    23: "IQ3_XXS",
    24: "IQ1_S",
    25: "IQ4_NL",
    26: "IQ3_S",
    27: "IQ3_M",
    28: "IQ2_S",
    29: "IQ2_M",
    30: "IQ4_XS",
    31: "IQ1_M",
    32: "BF16",
    36: "TQ1_0",
    37: "TQ2_0",
}
QUANTIZATION_CODES: dict[str, int] = {v: k for k, v in QUANTIZATION_LABELS.items()}

TOKENIZER_VOCAB_KEY = "tokenizer.ggml.tokens"


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class GgufError(TriageError, ValueError):
    """Metadata could not be parsed; ``offset`` is relative to the header start."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class GgufBadMagicError(GgufError):
    pass


class GgufLegacyVersionError(GgufError):
    pass


class GgufTruncatedError(GgufError):
    pass


class GgufUnknownTypeError(GgufError):
    def __init__(self, code: int, offset: int) -> None:
        super().__init__(f"unknown value type code {code}", offset)
        self.code = code


class GgufLimitError(GgufError):
    pass


# ---------------------------------------------------------------------------
# Parsed records
# ---------------------------------------------------------------------------


class GgufHeader(BaseModel):
    model_config = ConfigDict(frozen=True)

    magic: bytes = MAGIC
    version: int
    tensor_count: int
    kv_count: int

    @property
    def supported(self) -> bool:
        return self.version in SUPPORTED_VERSIONS


@dataclass(frozen=True)
class GgufValue:
    """A typed metadata value.

    Arrays hold a tuple of plain Python values when ``element_type`` is a
    scalar or string, and a tuple of :class:`GgufValue` for nested arrays.
    """

    type: GgufType
    value: Any
    element_type: GgufType | None = None


@dataclass
class GgufMetadata:
    header: GgufHeader
    kvs: dict[str, GgufValue] = field(default_factory=dict)
    # Bytes from the magic to the end of the last kv.
    metadata_size: int = 0


class ModelFingerprint(BaseModel):
    architecture: str | None = None
    name: str | None = None
    quantization: str | None = None
    context_length: int | None = None
    embedding_length: int | None = None
    size_label: str | None = None
    tensor_count: int | None = None
    tokenizer_present: bool = False
    file_digest: Digest


def is_gguf(prefix: bytes) -> bool:
    return len(prefix) >= 4 and prefix[:4] == MAGIC


# ---------------------------------------------------------------------------
# Reader
# ---------------------------------------------------------------------------


class _Reader:
    def __init__(self, stream: IO[bytes]) -> None:
        self.stream = stream
        self.offset = 0
        self.remaining: int | None = None
        try:
            start = stream.tell()
            end = stream.seek(0, os.SEEK_END)
            stream.seek(start)
            self.remaining = end - start
        except (OSError, ValueError, AttributeError):
            self.remaining = None

    def read(self, n: int, what: str) -> bytes:
        if self.remaining is not None and n > self.remaining:
            raise GgufTruncatedError(f"truncated while reading {what}", self.offset)
        chunks: list[bytes] = []
        need = n
        while need:
            block = self.stream.read(min(need, _READ_CHUNK))
            if not block:
                raise GgufTruncatedError(f"truncated while reading {what}", self.offset)
            chunks.append(block)
            need -= len(block)
        data = b"".join(chunks)
        self.offset += n
        if self.remaining is not None:
            self.remaining -= n
        return data

    def scalar(self, fmt: str, what: str) -> Any:
        return struct.unpack(fmt, self.read(struct.calcsize(fmt), what))[0]

    def string(self, what: str, limit: int = MAX_STRING_LEN) -> str:
        start = self.offset
        length = self.scalar("<Q", f"{what} length")
        if length > limit:
            raise GgufLimitError(f"{what} length {length} exceeds {limit}", start)
        raw = self.read(length, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise GgufError(f"{what} is not valid UTF-8", start) from None


def _type_code(reader: _Reader) -> GgufType:
    at = reader.offset
    code = reader.scalar("<I", "value type")
    try:
        return GgufType(code)
    except ValueError:
        raise GgufUnknownTypeError(code, at) from None


def _min_size(vtype: GgufType) -> int:
    if vtype is GgufType.STRING:
        return 8
    if vtype is GgufType.ARRAY:
        return 12
    return struct.calcsize(_SCALAR_FORMATS[vtype])


def _read_value(reader: _Reader, vtype: GgufType, depth: int = 0) -> GgufValue:
    if vtype is GgufType.STRING:
        return GgufValue(vtype, reader.string("string value"))
    if vtype is GgufType.ARRAY:
        element_type = _type_code(reader)
        at = reader.offset
        if element_type is GgufType.ARRAY and depth + 1 >= config.GGUF_MAX_ARRAY_DEPTH:
            raise GgufLimitError(
                f"arrays nested deeper than {config.GGUF_MAX_ARRAY_DEPTH}", at
            )
        count = reader.scalar("<Q", "array length")
        if reader.remaining is not None and count * _min_size(element_type) > reader.remaining:
            raise GgufTruncatedError(f"array of {count} elements overruns the stream", at)
        items: list[Any] = []
        for _ in range(count):
            if element_type is GgufType.ARRAY:
                items.append(_read_value(reader, element_type, depth + 1))
            else:
                items.append(_read_value(reader, element_type).value)
        return GgufValue(vtype, tuple(items), element_type)
    if vtype is GgufType.BOOL:
        at = reader.offset
        raw = reader.scalar("<B", "bool")
        if raw > 1:
            raise GgufError(f"bool byte {raw} out of range", at)
        return GgufValue(vtype, bool(raw))
    return GgufValue(vtype, reader.scalar(_SCALAR_FORMATS[vtype], vtype.name.lower()))


def read_header(reader: _Reader) -> GgufHeader:
    magic = reader.read(4, "magic")
    if magic != MAGIC:
        raise GgufBadMagicError(f"bad magic {magic!r}", 0)
    version = reader.scalar("<I", "version")
    if version < 2:
        raise GgufLegacyVersionError(f"legacy GGUF version {version}", 4)
    if version > 0xFFFF and struct.unpack("<I", struct.pack(">I", version))[0] <= 3:
        raise GgufError("big-endian GGUF is not supported", 4)
    tensor_count = reader.scalar("<Q", "tensor count")
    kv_count = reader.scalar("<Q", "kv count")
    header = GgufHeader(version=version, tensor_count=tensor_count, kv_count=kv_count)
    if not header.supported:
        log.warning("GGUF version %d is newer than supported; reading as v3 layout", version)
    return header


def parse_metadata(stream: IO[bytes]) -> GgufMetadata:
    """Parse the header and every kv pair, leaving ``stream`` at the metadata end."""
    reader = _Reader(stream)
    header = read_header(reader)
    kvs: dict[str, GgufValue] = {}
    for _ in range(header.kv_count):
        key_at = reader.offset
        key = reader.string("key", limit=config.GGUF_MAX_KEY_LEN)
        if key in kvs:
            raise GgufError(f"duplicate key {key!r}", key_at)
        vtype = _type_code(reader)
        kvs[key] = _read_value(reader, vtype)
    return GgufMetadata(header=header, kvs=kvs, metadata_size=reader.offset)


def parse_metadata_bytes(data: bytes) -> GgufMetadata:
    return parse_metadata(io.BytesIO(data))


def parse_file(path: Path) -> GgufMetadata:
    with path.open("rb") as f:
        return parse_metadata(f)


# ---------------------------------------------------------------------------
# Writer
# ---------------------------------------------------------------------------


def _pack_string(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<Q", len(raw)) + raw


def _pack_payload(vtype: GgufType, value: Any, element_type: GgufType | None) -> bytes:
    if vtype is GgufType.STRING:
        return _pack_string(value)
    if vtype is GgufType.ARRAY:
        if element_type is None:
            raise ValueError("array value needs an element_type")
        out = [struct.pack("<IQ", int(element_type), len(value))]
        for item in value:
            if element_type is GgufType.ARRAY:
                out.append(_pack_payload(item.type, item.value, item.element_type))
            else:
                out.append(_pack_payload(element_type, item, None))
        return b"".join(out)
    return struct.pack(_SCALAR_FORMATS[vtype], value)


def serialize_metadata(
    kvs: Mapping[str, GgufValue], *, version: int = 3, tensor_count: int = 0
) -> bytes:
    """Encode a header plus ``kvs`` in insertion order."""
    if version not in SUPPORTED_VERSIONS:
        raise ValueError(f"refusing to write GGUF version {version}")
    out = [MAGIC, struct.pack("<IQQ", version, tensor_count, len(kvs))]
    for key, val in kvs.items():
        out.append(_pack_string(key))
        out.append(struct.pack("<I", int(val.type)))
        out.append(_pack_payload(val.type, val.value, val.element_type))
    return b"".join(out)


# ---------------------------------------------------------------------------
# Fingerprints
# ---------------------------------------------------------------------------


def _string_kv(kvs: Mapping[str, GgufValue], key: str) -> str | None:
    v = kvs.get(key)
    return v.value if v is not None and v.type is GgufType.STRING else None


def _int_kv(kvs: Mapping[str, GgufValue], key: str) -> int | None:
    v = kvs.get(key)
    return int(v.value) if v is not None and v.type in INTEGER_TYPES else None


def quantization_label(code: int) -> str:
    return QUANTIZATION_LABELS.get(code, f"FTYPE_{code}")


def fingerprint(m: GgufMetadata, file_digest: Digest) -> ModelFingerprint:
    """Identity fields of a model. Absent keys stay absent."""
    kvs = m.kvs
    arch = _string_kv(kvs, "general.architecture")
    file_type = _int_kv(kvs, "general.file_type")
    return ModelFingerprint(
        architecture=arch,
        name=_string_kv(kvs, "general.name"),
        quantization=quantization_label(file_type) if file_type is not None else None,
        context_length=_int_kv(kvs, f"{arch}.context_length") if arch else None,
        embedding_length=_int_kv(kvs, f"{arch}.embedding_length") if arch else None,
        size_label=_string_kv(kvs, "general.size_label"),
        tensor_count=m.header.tensor_count,
        tokenizer_present=TOKENIZER_VOCAB_KEY in kvs,
        file_digest=file_digest,
    )


def fingerprint_file(path: Path, file_digest: Digest | None = None) -> ModelFingerprint:
    """Parse and fingerprint ``path``; hashes the file unless a digest is given."""
    metadata = parse_file(path)
    return fingerprint(metadata, file_digest or hash_file(path))


# ---------------------------------------------------------------------------
# Inspection dump
# ---------------------------------------------------------------------------


def _render(value: GgufValue, max_items: int) -> Any:
    if value.type is not GgufType.ARRAY:
        return value.value
    items = value.value
    if value.element_type in (GgufType.UINT8, GgufType.INT8) and len(items) <= max_items * 64:
        return {"type": "bytes", "hex": bytes(i & 0xFF for i in items).hex()}
    shown = [
        _render(i, max_items) if isinstance(i, GgufValue) else i for i in items[:max_items]
    ]
    if len(items) > max_items:
        et = value.element_type.name.lower() if value.element_type is not None else None
        return {"type": "array", "element_type": et, "count": len(items), "head": shown}
    return shown


def dump_kvs(m: GgufMetadata, *, max_items: int = 16) -> dict[str, Any]:
    """JSON-friendly kv dump: byte arrays as hex, long arrays elided with counts."""
    return {key: _render(val, max_items) for key, val in m.kvs.items()}
