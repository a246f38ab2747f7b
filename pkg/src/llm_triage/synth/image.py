"""Raw disk-image stand-ins for carver tests."""

from __future__ import annotations

import logging
import random
from collections.abc import Sequence
from pathlib import Path

from pydantic import BaseModel

from llm_triage import config
from llm_triage.analyzers.gguf import MAGIC
from llm_triage.carver import SECTOR
from llm_triage.evidence import Digest
from llm_triage.synth.gguf import GgufParams, synthesize_gguf

log = logging.getLogger(__name__)

DEFAULT_IMAGE_SIZE = 64 * config.MiB


class PlantedPayload(BaseModel):
    offset: int
    size: int
    digest: Digest


class ImageGroundTruth(BaseModel):
    image_size: int
    payloads: list[PlantedPayload]

    def to_json(self) -> bytes:
        return (self.model_dump_json(indent=2) + "\n").encode("utf-8")


def plant_image(
    payloads: Sequence[bytes], image_size: int, offsets: Sequence[int], out_path: Path
) -> ImageGroundTruth:
    """A sparse image of ``image_size`` zero bytes with each payload at its offset.

    Overlapping payloads, or ones that run past the end, raise ``ValueError``.
    """
    if len(payloads) != len(offsets):
        raise ValueError(f"{len(payloads)} payload(s) but {len(offsets)} offset(s)")
    spans = sorted(zip(offsets, (len(p) for p in payloads), strict=True))
    end = 0
    for offset, size in spans:
        if offset < 0 or offset + size > image_size:
            raise ValueError(f"payload at {offset} ({size} bytes) does not fit the image")
        if offset < end:
            raise ValueError(f"payload at {offset} overlaps the one ending at {end}")
        end = offset + size

    with out_path.open("wb") as f:
        f.truncate(image_size)
        for payload, offset in zip(payloads, offsets, strict=True):
            f.seek(offset)
            f.write(payload)
    log.info("planted %d payload(s) in %s (%d bytes)", len(payloads), out_path, image_size)
    return ImageGroundTruth(
        image_size=image_size,
        payloads=[
            PlantedPayload(offset=o, size=len(p), digest=Digest.of(p))
            for p, o in zip(payloads, offsets, strict=True)
        ],
    )


def random_image(out_path: Path, size: int, seed: int) -> None:
    """Pseudorandom bytes with every occurrence of the GGUF magic scrubbed."""
    rng = random.Random(seed)
    tail = b""
    written = 0
    with out_path.open("wb") as f:
        while written < size:
            chunk = bytearray(rng.randbytes(min(config.MiB, size - written)))
            window = tail + chunk
            pos = window.find(MAGIC)
            while pos != -1:
                # the magic's last byte always falls inside the new chunk
                chunk[pos + len(MAGIC) - 1 - len(tail)] = 0
                window = tail + chunk
                pos = window.find(MAGIC, pos + 1)
            f.write(chunk)
            tail = bytes(window[-(len(MAGIC) - 1) :])
            written += len(chunk)


def default_plan(seed: int) -> tuple[list[bytes], list[int]]:
    """Three small models for a 64 MiB image, the middle one straddling 16 MiB.

    The first and last sit on sector boundaries; the middle one does not.
    """
    names = ("Carve Alpha", "Carve Beta", "Carve Gamma")
    rng = random.Random(seed)
    payloads = [
        synthesize_gguf(
            GgufParams(arch="llama", name=name, quantization="Q4_K_M", tensor_count=i + 1)
        )
        + rng.randbytes(512)
        for i, name in enumerate(names)
    ]
    offsets = [2048 * SECTOR, 16 * config.MiB - 2, 40 * config.MiB + 7 * SECTOR]
    return payloads, offsets
