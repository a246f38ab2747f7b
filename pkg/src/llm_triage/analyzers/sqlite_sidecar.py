"""SQLite databases and their -wal / -journal / -shm siblings.

Only the 100-byte database header and the 32-byte WAL header are ever read;
pages, WAL frames and freelists are left to dedicated SQLite tooling.
"""

from __future__ import annotations

import logging
import struct
from collections.abc import Callable, Iterable
from pathlib import Path

from pydantic import BaseModel

from llm_triage.catalog import walk_files

log = logging.getLogger(__name__)

SQLITE_HEADER = b"SQLite format 3\x00"
DB_SUFFIXES = frozenset({".db", ".sqlite", ".sqlite3", ".db3"})
SIDECAR_SUFFIXES = ("-wal", "-journal", "-shm")
DB_HEADER_SIZE = 100
WAL_HEADER_SIZE = 32
WAL_MAGICS = frozenset({0x377F0682, 0x377F0683})


class SqliteSighting(BaseModel):
    db_path: str
    header_valid: bool
    wal_present: bool
    journal_present: bool
    shm_present: bool = False
    # File name -> size in bytes, for the database and each sidecar present.
    sizes: dict[str, int]
    page_size: int | None = None
    # In-header database size; 0 from writers older than 3.7.0.
    page_count: int | None = None
    # File format write and read versions are both 2.
    wal_mode: bool = False
    wal_page_size: int | None = None
    wal_checkpoint_seq: int | None = None
    # Salt-1/salt-2 change on every checkpoint; frames with other salts are stale.
    wal_salts: tuple[int, int] | None = None


def _read_prefix(path: Path, size: int) -> bytes:
    try:
        with path.open("rb") as f:
            return f.read(size)
    except OSError as exc:
        log.warning("cannot read %s: %s", path, exc)
        return b""


def has_sqlite_header(path: Path) -> bool:
    return _read_prefix(path, len(SQLITE_HEADER)) == SQLITE_HEADER


def read_db_header(path: Path) -> tuple[int, int, bool] | None:
    """``(page_size, page_count, wal_mode)`` from the database header."""
    data = _read_prefix(path, DB_HEADER_SIZE)
    if len(data) < DB_HEADER_SIZE or not data.startswith(SQLITE_HEADER):
        return None
    (page_size,) = struct.unpack_from(">H", data, 16)
    write_version, read_version = data[18], data[19]
    (page_count,) = struct.unpack_from(">I", data, 28)
    return (
        65536 if page_size == 1 else page_size,
        page_count,
        write_version == 2 and read_version == 2,
    )


def read_wal_header(path: Path) -> tuple[int, int, tuple[int, int]] | None:
    """``(page_size, checkpoint_seq, (salt1, salt2))`` from a ``-wal`` file."""
    data = _read_prefix(path, WAL_HEADER_SIZE)
    if len(data) < WAL_HEADER_SIZE:
        return None
    magic, _version, page_size, checkpoint_seq, salt1, salt2 = struct.unpack_from(">6I", data)
    if magic not in WAL_MAGICS:
        return None
    return page_size, checkpoint_seq, (salt1, salt2)


def _is_sidecar(path: Path) -> bool:
    return path.name.endswith(SIDECAR_SUFFIXES)


def _candidates(target: Path | Iterable[Path]) -> list[Path]:
    if isinstance(target, Path):
        if target.is_dir():
            return sorted(walk_files(target))
        return [target] if target.is_file() else []
    return sorted(p for p in target if p.is_file())


def detect_sqlite(
    target: Path | Iterable[Path], *, path_label: Callable[[Path], str] = str
) -> list[SqliteSighting]:
    """Sightings for a directory tree or an explicit list of files.

    A file counts when its header matches or its extension says database;
    the second kind is reported with ``header_valid=False``.
    """
    sightings: list[SqliteSighting] = []
    seen: set[Path] = set()
    for path in _candidates(target):
        if path in seen or _is_sidecar(path):
            continue
        seen.add(path)
        valid = has_sqlite_header(path)
        if not valid and path.suffix.casefold() not in DB_SUFFIXES:
            continue
        sizes = {path.name: path.stat().st_size}
        present: dict[str, bool] = {}
        for suffix in SIDECAR_SUFFIXES:
            sibling = path.with_name(path.name + suffix)
            present[suffix] = sibling.is_file()
            if present[suffix]:
                sizes[sibling.name] = sibling.stat().st_size
        sighting = SqliteSighting(
            db_path=path_label(path),
            header_valid=valid,
            wal_present=present["-wal"],
            journal_present=present["-journal"],
            shm_present=present["-shm"],
            sizes=sizes,
        )
        if valid and (db_header := read_db_header(path)) is not None:
            sighting.page_size, sighting.page_count, sighting.wal_mode = db_header
        if present["-wal"]:
            wal_header = read_wal_header(path.with_name(path.name + "-wal"))
            if wal_header is not None:
                page_size, checkpoint_seq, salts = wal_header
                sighting.wal_page_size = page_size
                sighting.wal_checkpoint_seq = checkpoint_seq
                sighting.wal_salts = salts
        sightings.append(sighting)
    return sightings
