"""Tests for env-overridable runtime knobs.

The config module reads env vars at import time, so each test reloads
the module after manipulating ``os.environ`` via monkeypatch, and the
fixture reloads it once more afterwards so later tests see the suite's
defaults again.
"""

from __future__ import annotations

import importlib
from collections.abc import Callable, Iterator
from types import ModuleType

import pytest

from llm_triage import config

Reload = Callable[..., ModuleType]


@pytest.fixture
def reload_config(monkeypatch: pytest.MonkeyPatch) -> Iterator[Reload]:
    def _reload(**env: str | None) -> ModuleType:
        for key, value in env.items():
            if value is None:
                monkeypatch.delenv(key, raising=False)
            else:
                monkeypatch.setenv(key, value)
        return importlib.reload(config)

    yield _reload
    monkeypatch.undo()
    importlib.reload(config)


class TestIntegerKnobs:
    def test_defaults(self, reload_config: Reload) -> None:
        cfg = reload_config(
            LLMTRIAGE_MAX_FILE_SIZE=None,
            LLMTRIAGE_STRING_MIN_LEN=None,
            LLMTRIAGE_PACK_THRESHOLD=None,
        )
        assert cfg.MAX_FILE_SIZE == 64 * cfg.GiB
        assert cfg.STRING_MIN_LEN == 6
        assert cfg.PACK_SIZE_THRESHOLD == 500 * cfg.MiB

    def test_env_var_overrides(self, reload_config: Reload) -> None:
        cfg = reload_config(LLMTRIAGE_STRING_MIN_LEN="4", LLMTRIAGE_CARVE_BLOCK="4096")
        assert cfg.STRING_MIN_LEN == 4
        assert cfg.CARVE_BLOCK_SIZE == 4096

    @pytest.mark.parametrize("raw", ["abc", "0", "-5", "1.5"])
    def test_junk_falls_back_to_default(self, reload_config: Reload, raw: str) -> None:
        cfg = reload_config(LLMTRIAGE_SAMPLES=raw)
        assert cfg.INVENTORY_SAMPLES == 32


class TestStringKnobs:
    def test_actor_default(self, reload_config: Reload) -> None:
        cfg = reload_config(LLMTRIAGE_ACTOR=None)
        assert cfg.CUSTODY_ACTOR == "llmtriage"

    def test_blank_actor_falls_back(self, reload_config: Reload) -> None:
        cfg = reload_config(LLMTRIAGE_ACTOR="   ")
        assert cfg.CUSTODY_ACTOR == "llmtriage"

    def test_local_tz_unset_is_none(self, reload_config: Reload) -> None:
        cfg = reload_config(LLMTRIAGE_LOCAL_TZ=None)
        assert cfg.LOCAL_TZ is None

    def test_local_tz_from_env(self, reload_config: Reload) -> None:
        cfg = reload_config(LLMTRIAGE_LOCAL_TZ="Australia/Brisbane")
        assert cfg.LOCAL_TZ == "Australia/Brisbane"
