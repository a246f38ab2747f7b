"""Tests for synthetic corpora and raw images."""

from __future__ import annotations

from pathlib import Path

import pytest

from llm_triage.analyzers.gguf import MAGIC
from llm_triage.carver import SECTOR
from llm_triage.catalog import OsProfile, get_descriptor
from llm_triage.evidence import Digest
from llm_triage.synth import SynthesisManifest, plant_image, random_image, synthesize_tree
from llm_triage.synth.image import default_plan
from llm_triage.synth.tree import SYNTH_EPOCH


class TestSynthesizeTree:
    def test_same_seed_same_corpus(self, tmp_path: Path) -> None:
        a = synthesize_tree(3, OsProfile.LINUX, tmp_path / "a")
        b = synthesize_tree(3, OsProfile.LINUX, tmp_path / "b")
        assert a == b
        assert a.tree_digest is not None

    def test_seed_changes_content(self, tmp_path: Path) -> None:
        a = synthesize_tree(3, OsProfile.WINDOWS, tmp_path / "a")
        b = synthesize_tree(4, OsProfile.WINDOWS, tmp_path / "b")
        assert a.tree_digest != b.tree_digest

    def test_refuses_non_empty_directory(self, tmp_path: Path) -> None:
        (tmp_path / "junk").write_bytes(b"x")
        with pytest.raises(ValueError, match="non-empty"):
            synthesize_tree(1, OsProfile.LINUX, tmp_path)

    def test_needs_concrete_profile(self, tmp_path: Path) -> None:
        with pytest.raises(ValueError):
            synthesize_tree(1, OsProfile.ANY, tmp_path / "x")

    def test_planted_files_exist_under_known_descriptors(
        self, linux_corpus: tuple[Path, SynthesisManifest]
    ) -> None:
        root, manifest = linux_corpus
        for item in manifest.planted:
            get_descriptor(item.descriptor_id)
            assert (root / item.path.lstrip("/")).is_file(), item.path

    def test_mtimes_are_deterministic(
        self, linux_corpus: tuple[Path, SynthesisManifest]
    ) -> None:
        root, _ = linux_corpus
        assert (root / "etc" / "hostname").stat().st_mtime == SYNTH_EPOCH.timestamp()

    def test_windows_layout(self, windows_corpus: tuple[Path, SynthesisManifest]) -> None:
        root, manifest = windows_corpus
        assert manifest.os_profile is OsProfile.WINDOWS
        assert (root / "Windows" / "System32").is_dir()
        assert len(list((root / "Windows" / "Prefetch").iterdir())) == 3
        assert "system-pagefile" in manifest.descriptor_ids()
        assert "system-swapfile" not in manifest.descriptor_ids()

    def test_history_detail_matches_script(
        self, linux_corpus: tuple[Path, SynthesisManifest]
    ) -> None:
        root, manifest = linux_corpus
        (history,) = manifest.items("ollama-history")
        lines = (root / history.path.lstrip("/")).read_text().splitlines()
        assert lines == history.detail["prompts"]


class TestPlantImage:
    def test_payloads_at_offsets(self, tmp_path: Path) -> None:
        out = tmp_path / "img"
        truth = plant_image([b"GGUFaaaa", b"GGUFbb"], 4096, [0, 1000], out)
        data = out.read_bytes()
        assert len(data) == 4096
        assert data[1000:1006] == b"GGUFbb"
        assert [p.digest for p in truth.payloads] == [Digest.of(b"GGUFaaaa"), Digest.of(b"GGUFbb")]

    @pytest.mark.parametrize(
        ("payloads", "offsets"),
        [
            ([b"abcd", b"efgh"], [0, 2]),
            ([b"abcd"], [4094]),
            ([b"abcd"], [0, 10]),
            ([b"abcd"], [-1]),
        ],
    )
    def test_rejects_bad_layouts(
        self, tmp_path: Path, payloads: list[bytes], offsets: list[int]
    ) -> None:
        with pytest.raises(ValueError):
            plant_image(payloads, 4096, offsets, tmp_path / "img")

    def test_default_plan(self) -> None:
        payloads, offsets = default_plan(1)
        assert len(payloads) == len(offsets) == 3
        assert [o % SECTOR == 0 for o in offsets] == [True, False, True]
        assert all(p.startswith(MAGIC) for p in payloads)
        assert default_plan(1) == (payloads, offsets)


class TestRandomImage:
    def test_no_magic_and_exact_size(self, tmp_path: Path) -> None:
        out = tmp_path / "noise"
        random_image(out, 2 * 1024 * 1024 + 5, seed=11)
        data = out.read_bytes()
        assert len(data) == 2 * 1024 * 1024 + 5
        assert MAGIC not in data

    def test_seeded(self, tmp_path: Path) -> None:
        random_image(tmp_path / "a", 10_000, seed=2)
        random_image(tmp_path / "b", 10_000, seed=2)
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
