"""Tests for the artifact catalog and path-template resolution."""

from __future__ import annotations

from pathlib import Path

import pytest

from llm_triage.catalog import (
    CATALOG,
    EnvBinding,
    OsProfile,
    Persistence,
    Tool,
    catalog_entries,
    drive_of,
    get_descriptor,
    host_path,
    map_under_root,
    resolve_paths,
    stays_within,
    to_image_path,
    walk_files,
)


def _binding(name: str, value: str) -> EnvBinding:
    return EnvBinding(name=name, value=value, source="/etc/profile", source_kind="shell-profile")


# ---------------------------------------------------------------------------
# Catalog contents
# ---------------------------------------------------------------------------


class TestCatalog:
    def test_ids_unique_and_sorted(self) -> None:
        ids = [d.id for d in CATALOG]
        assert ids == sorted(ids)
        assert len(ids) == len(set(ids)) == 30

    def test_every_tool_is_covered(self) -> None:
        assert {d.tool for d in CATALOG} == set(Tool)

    def test_values_in_range(self) -> None:
        assert all(1 <= d.value <= 5 for d in CATALOG)

    def test_off_disk_entries(self) -> None:
        off = {d.id for d in CATALOG if not d.on_disk}
        assert off == {"lmstudio-log-stream", "llamacpp-memory"}
        assert get_descriptor("llamacpp-memory").persistence is Persistence.EXTREMELY_VOLATILE

    def test_linux_filter_keeps_any(self) -> None:
        ids = {d.id for d in catalog_entries(os_profile=OsProfile.LINUX)}
        assert "llamacpp-zsh-history" in ids
        assert "ollama-history" in ids
        assert "llamacpp-powershell-history" not in ids
        assert "system-pagefile" not in ids

    def test_windows_filter(self) -> None:
        ids = {d.id for d in catalog_entries(os_profile=OsProfile.WINDOWS)}
        assert "llamacpp-powershell-history" in ids
        assert not ids & {
            "llamacpp-zsh-history", "ollama-service-unit", "ollama-service-dropins",
            "system-swapfile",
        }

    def test_any_filter_keeps_everything(self) -> None:
        assert catalog_entries(os_profile=OsProfile.ANY) == list(CATALOG)

    def test_tool_and_os_filters_combine(self) -> None:
        entries = catalog_entries(tool=Tool.OLLAMA, os_profile=OsProfile.WINDOWS)
        assert [d.id for d in entries] == [
            "ollama-blobs", "ollama-history", "ollama-manifests", "ollama-server-log",
        ]

    def test_unknown_id(self) -> None:
        with pytest.raises(ValueError, match="unknown descriptor"):
            get_descriptor("nope")

    def test_shape_flags(self) -> None:
        assert get_descriptor("ollama-manifests").is_directory
        assert get_descriptor("llamacpp-model-files").is_sweep
        assert not get_descriptor("ollama-history").is_directory


# ---------------------------------------------------------------------------
# Path mapping
# ---------------------------------------------------------------------------


class TestPathMapping:
    @pytest.mark.parametrize(
        ("raw", "expected"),
        [
            ("C:\\Users\\bob\\.lmstudio", "/Users/bob/.lmstudio"),
            ("d:/ollama/models", "/ollama/models"),
            ("/srv/ollama/../ollama/models", "/srv/ollama/models"),
            ("relative/path", None),
            ("~/.lmstudio", None),
        ],
    )
    def test_to_image_path(self, raw: str, expected: str | None) -> None:
        assert to_image_path(raw) == expected

    def test_drive_of(self) -> None:
        assert drive_of("d:\\x") == "D"
        assert drive_of("/x") is None

    def test_host_path_case_insensitive(self, tmp_path: Path) -> None:
        (tmp_path / "Users" / "Carol" / "AppData").mkdir(parents=True)
        found = host_path(tmp_path, "/users/carol/appdata/Local", case_insensitive=True)
        assert found == tmp_path / "Users" / "Carol" / "AppData" / "Local"

    def test_host_path_case_sensitive(self, tmp_path: Path) -> None:
        (tmp_path / "Users").mkdir()
        assert host_path(tmp_path, "/users/x") == tmp_path / "users" / "x"

    def test_map_under_root(self, tmp_path: Path) -> None:
        assert map_under_root("C:\\data", tmp_path) == tmp_path / "data"
        assert map_under_root("relative", tmp_path) is None

    def test_map_under_root_with_volume(self, tmp_path: Path) -> None:
        volume = tmp_path / "d-drive"
        mapped = map_under_root("D:\\ollama", tmp_path / "root", volumes={"D": volume})
        assert mapped == volume / "ollama"


class TestContainment:
    @pytest.fixture
    def tree(self, tmp_path: Path) -> Path:
        root = tmp_path / "root"
        (root / "data" / "sub").mkdir(parents=True)
        (root / "data" / "a.json").write_bytes(b"{}")
        (root / "data" / "sub" / "b.json").write_bytes(b"{}")
        outside = tmp_path / "outside"
        outside.mkdir()
        (outside / "c.json").write_bytes(b"{}")
        (root / "data" / "linked").symlink_to(outside, target_is_directory=True)
        (root / "data" / "c.json").symlink_to(outside / "c.json")
        (root / "alias").symlink_to(root / "data", target_is_directory=True)
        return root

    def test_lexical_inside_but_linked_out(self, tree: Path) -> None:
        escaped = tree / "data" / "linked" / "c.json"
        assert stays_within(escaped, tree) is False
        assert stays_within(escaped, tree, follow_symlinks=True) is False

    def test_link_that_stays_inside(self, tree: Path) -> None:
        aliased = tree / "alias" / "a.json"
        assert stays_within(aliased, tree) is False
        assert stays_within(aliased, tree, follow_symlinks=True) is True
        assert stays_within(tree / "data" / "a.json", tree) is True

    def test_walk_skips_links(self, tree: Path) -> None:
        found = walk_files(tree / "data", "*.json", base=tree)
        assert [p.relative_to(tree).as_posix() for p in found] == ["data/a.json", "data/sub/b.json"]

    def test_walk_below_a_linked_directory(self, tree: Path) -> None:
        assert walk_files(tree / "alias", base=tree) == []
        followed = walk_files(tree / "alias", base=tree, follow_symlinks=True)
        assert [p.name for p in followed] == ["a.json", "b.json"]


# ---------------------------------------------------------------------------
# resolve_paths
# ---------------------------------------------------------------------------


class TestResolvePaths:
    def test_home_template_one_per_home(self, tmp_path: Path) -> None:
        d = get_descriptor("ollama-history")
        paths = resolve_paths(d, tmp_path, ["/home/a", "/home/b"])
        assert paths == [
            tmp_path / "home/a/.ollama/history",
            tmp_path / "home/b/.ollama/history",
        ]

    def test_system_root_template(self, tmp_path: Path) -> None:
        d = get_descriptor("system-swapfile")
        assert resolve_paths(d, tmp_path, ["/home/a"]) == [tmp_path / "swap.img"]

    def test_off_disk_never_resolves(self, tmp_path: Path) -> None:
        assert resolve_paths(get_descriptor("lmstudio-log-stream"), tmp_path, ["/home/a"]) == []

    def test_override_adds_candidate(self, tmp_path: Path) -> None:
        d = get_descriptor("ollama-blobs")
        paths = resolve_paths(d, tmp_path, ["/home/a"], [_binding("OLLAMA_MODELS", "/srv/m")])
        assert paths == [tmp_path / "home/a/.ollama/models/blobs", tmp_path / "srv/m/blobs"]

    def test_relative_override_warns(self, tmp_path: Path) -> None:
        warnings: list[str] = []
        d = get_descriptor("ollama-manifests")
        paths = resolve_paths(
            d, tmp_path, [], [_binding("OLLAMA_MODELS", "models")], warnings=warnings
        )
        assert paths == []
        assert any("not absolute" in w for w in warnings)

    def test_unrelated_override_ignored(self, tmp_path: Path) -> None:
        d = get_descriptor("ollama-history")
        paths = resolve_paths(d, tmp_path, ["/home/a"], [_binding("OLLAMA_MODELS", "/srv/m")])
        assert paths == [tmp_path / "home/a/.ollama/history"]

    def test_lmstudio_templates_reroot_onto_lm_homes(self, tmp_path: Path) -> None:
        d = get_descriptor("lmstudio-conversations")
        paths = resolve_paths(d, tmp_path, ["/home/a"], lm_homes=["/data/lms"])
        assert paths == [tmp_path / "data/lms/conversations"]

    def test_home_pointer_is_not_rerooted(self, tmp_path: Path) -> None:
        d = get_descriptor("lmstudio-home-pointer")
        paths = resolve_paths(d, tmp_path, ["/home/a"], lm_homes=["/data/lms"])
        assert paths == [tmp_path / "home/a/.lmstudio-home-pointer"]

    def test_windows_case_insensitive(self, tmp_path: Path) -> None:
        (tmp_path / "USERS" / "carol" / ".OLLAMA").mkdir(parents=True)
        d = get_descriptor("ollama-history")
        paths = resolve_paths(d, tmp_path, ["/Users/carol"], os_profile=OsProfile.WINDOWS)
        assert paths == [tmp_path / "USERS" / "carol" / ".OLLAMA" / "history"]

    def test_dot_dot_collapses_under_root(self, tmp_path: Path) -> None:
        d = get_descriptor("ollama-history")
        paths = resolve_paths(d, tmp_path / "root", ["/../../etc"])
        assert paths == [tmp_path / "root" / "etc" / ".ollama" / "history"]

    def test_sweep_skips_dot_dirs(self, tmp_path: Path) -> None:
        home = tmp_path / "home" / "a"
        (home / "models").mkdir(parents=True)
        (home / ".lmstudio" / "models").mkdir(parents=True)
        (home / "models" / "x.gguf").write_bytes(b"GGUF")
        (home / "models" / "notes.txt").write_bytes(b"")
        (home / ".lmstudio" / "models" / "y.gguf").write_bytes(b"GGUF")
        paths = resolve_paths(get_descriptor("llamacpp-model-files"), tmp_path, ["/home/a"])
        assert paths == [home / "models" / "x.gguf"]
