"""Shared test fixtures for llm-triage.

Provides session-scoped synthetic corpora (one Linux, one Windows) and a
scan of each, built once and reused: corpus synthesis plus a full scan is
the slowest thing the suite does.

The api-prediction-history pack planted by synthesis is sized from
``LLMTRIAGE_PACK_THRESHOLD``; we shrink it before importing anything that
reads config so the corpus stays a few MiB.
"""

import os

# Must be set BEFORE importing llm_triage: config reads env vars at import.
os.environ.setdefault("LLMTRIAGE_PACK_THRESHOLD", str(2 * 1024 * 1024))

from collections.abc import Callable  # noqa: E402
from datetime import UTC, datetime  # noqa: E402
from pathlib import Path  # noqa: E402

import pytest  # noqa: E402

from llm_triage.catalog import OsProfile  # noqa: E402
from llm_triage.scanner import ScanOptions, ScanReport, scan  # noqa: E402
from llm_triage.synth import SynthesisManifest, synthesize_tree  # noqa: E402

SCAN_TIME = datetime(2025, 9, 1, 12, 0, tzinfo=UTC)


def fixed_clock() -> datetime:
    return SCAN_TIME


@pytest.fixture(scope="session")
def clock() -> Callable[[], datetime]:
    return fixed_clock


# ---------------------------------------------------------------------------
# Session-scoped corpora (created once, reused across all tests)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def linux_corpus(tmp_path_factory: pytest.TempPathFactory) -> tuple[Path, SynthesisManifest]:
    root = tmp_path_factory.mktemp("linux") / "root"
    return root, synthesize_tree(1, OsProfile.LINUX, root)


@pytest.fixture(scope="session")
def windows_corpus(
    tmp_path_factory: pytest.TempPathFactory,
) -> tuple[Path, SynthesisManifest]:
    root = tmp_path_factory.mktemp("windows") / "root"
    return root, synthesize_tree(1, OsProfile.WINDOWS, root)


@pytest.fixture(scope="session")
def linux_scan(linux_corpus: tuple[Path, SynthesisManifest]) -> ScanReport:
    root, _ = linux_corpus
    return scan(root, options=ScanOptions(clock=fixed_clock, workers=4))


@pytest.fixture(scope="session")
def windows_scan(windows_corpus: tuple[Path, SynthesisManifest]) -> ScanReport:
    root, _ = windows_corpus
    return scan(root, options=ScanOptions(clock=fixed_clock, workers=4))
