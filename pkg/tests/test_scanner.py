"""Tests for the filesystem scan: profile, homes, planning, collection, cross-checks."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from llm_triage.analyzers.lmstudio import ChatRole, ModelTree
from llm_triage.analyzers.llamacpp import Recoverability, Shell
from llm_triage.analyzers.ollama import BlobStatus, LogEventKind
from llm_triage.catalog import OsProfile, Tool
from llm_triage.evidence import Digest, FindingStatus, verify_custody_file
from llm_triage.scanner import (
    InstallKind,
    ScanOptions,
    ScanReport,
    detect_installs,
    detect_os_profile,
    enumerate_user_homes,
    image_label,
    lmstudio_homes,
    plan_candidates,
    scan,
)
from llm_triage.synth import SynthesisManifest, tree_digest
from llm_triage.synth.script import BATCH_PARAMS, BATCH_PROMPTS, PROMPTS, SECRET_MARKER
from llm_triage.synth.tree import LM_MODEL_ID

from .conftest import fixed_clock


def _finding_keys(report: ScanReport) -> set[tuple[str, str]]:
    return {(f.descriptor_id, f.resolved_path) for f in report.findings}


def _write(root: Path, image: str, data: bytes) -> Path:
    path = root / image.lstrip("/")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return path


# ---------------------------------------------------------------------------
# Profile and homes
# ---------------------------------------------------------------------------


class TestProfileAndHomes:
    def test_windows_detected_case_insensitively(self, tmp_path: Path) -> None:
        (tmp_path / "WINDOWS" / "system32").mkdir(parents=True)
        assert detect_os_profile(tmp_path) is OsProfile.WINDOWS

    def test_linux_detected(self, tmp_path: Path) -> None:
        (tmp_path / "etc").mkdir()
        assert detect_os_profile(tmp_path) is OsProfile.LINUX

    def test_unknown_falls_back_to_linux_with_warning(self, tmp_path: Path) -> None:
        warnings: list[str] = []
        assert detect_os_profile(tmp_path, warnings=warnings) is OsProfile.LINUX
        assert warnings

    def test_linux_homes_include_root(self, tmp_path: Path) -> None:
        (tmp_path / "home" / "b").mkdir(parents=True)
        (tmp_path / "home" / "a").mkdir()
        (tmp_path / "root").mkdir()
        assert enumerate_user_homes(tmp_path, OsProfile.LINUX) == ["/home/a", "/home/b", "/root"]

    def test_windows_skips_shared_profiles(self, tmp_path: Path) -> None:
        for name in ("carol", "Public", "Default", "All Users"):
            (tmp_path / "Users" / name).mkdir(parents=True)
        assert enumerate_user_homes(tmp_path, OsProfile.WINDOWS) == ["/Users/carol"]

    def test_pointer_target_comes_first(self, tmp_path: Path) -> None:
        _write(tmp_path, "/home/a/.lmstudio-home-pointer", b"/data/lms\n")
        (tmp_path / "data" / "lms").mkdir(parents=True)
        (tmp_path / "home" / "a" / ".lmstudio").mkdir()
        homes = lmstudio_homes(tmp_path, OsProfile.LINUX, ["/home/a"])
        assert homes == ["/data/lms", "/home/a/.lmstudio"]

    def test_pointer_to_missing_directory_is_dropped(self, tmp_path: Path) -> None:
        _write(tmp_path, "/home/a/.lmstudio-home-pointer", b"/gone\n")
        assert lmstudio_homes(tmp_path, OsProfile.LINUX, ["/home/a"]) == []


class TestImageLabel:
    def test_inside_root(self, tmp_path: Path) -> None:
        assert image_label(tmp_path / "home" / "a", tmp_path) == "/home/a"
        assert image_label(tmp_path, tmp_path) == "/"

    def test_mapped_volume(self, tmp_path: Path) -> None:
        volume = tmp_path / "d"
        label = image_label(volume / "models" / "x", tmp_path / "root", {"D": volume})
        assert label == "D:/models/x"


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------


class TestPlanCandidates:
    def test_each_file_claimed_once(self, tmp_path: Path) -> None:
        _write(tmp_path, "/home/a/.lmstudio/models/p/r/m.gguf", b"GGUF")
        _write(tmp_path, "/home/a/models/loose.gguf", b"GGUF")
        candidates = plan_candidates(
            tmp_path, OsProfile.LINUX, ["/home/a"], ["/home/a/.lmstudio"], []
        )
        assert [(c.descriptor.id, c.image) for c in candidates] == [
            ("lmstudio-models", "/home/a/.lmstudio/models/p/r/m.gguf"),
            ("llamacpp-model-files", "/home/a/models/loose.gguf"),
        ]

    def test_symlinks_not_followed_by_default(self, tmp_path: Path) -> None:
        root = tmp_path / "root"
        _write(root, "/srv/kept-history", b"inside prompt\n")
        (root / "home" / "a" / ".ollama").mkdir(parents=True)
        (root / "home" / "a" / ".ollama" / "history").symlink_to(root / "srv" / "kept-history")
        plain = plan_candidates(root, OsProfile.LINUX, ["/home/a"], [], [])
        followed = plan_candidates(
            root, OsProfile.LINUX, ["/home/a"], [], [], follow_symlinks=True
        )
        assert plain == []
        assert [c.descriptor.id for c in followed] == ["ollama-history"]

    def test_link_out_of_root_is_never_followed(self, tmp_path: Path) -> None:
        outside = tmp_path / "outside"
        outside.write_bytes(b"host prompt\n")
        root = tmp_path / "root"
        (root / "home" / "a" / ".ollama").mkdir(parents=True)
        (root / "home" / "a" / ".ollama" / "history").symlink_to(outside)
        for follow in (False, True):
            assert plan_candidates(
                root, OsProfile.LINUX, ["/home/a"], [], [], follow_symlinks=follow
            ) == []

    def test_symlinked_parent_directory(self, tmp_path: Path) -> None:
        host_dir = tmp_path / "host-ollama"
        _write(host_dir, "/history", b"SECRET HOST PROMPT\n")
        _write(host_dir, "/models/manifests/r/l/m/latest", b"{}")
        root = tmp_path / "root"
        _write(root, "/etc/hostname", b"box\n")
        (root / "home" / "alice").mkdir(parents=True)
        (root / "home" / "alice" / ".ollama").symlink_to(host_dir, target_is_directory=True)

        for follow in (False, True):
            assert plan_candidates(
                root, OsProfile.LINUX, ["/home/alice"], [], [], follow_symlinks=follow
            ) == []
        report = scan(root, OsProfile.LINUX, ScanOptions(clock=fixed_clock))
        assert not any(".ollama" in f.resolved_path for f in report.findings)
        assert "SECRET HOST PROMPT" not in report.model_dump_json()

    def test_lmstudio_home_behind_symlink_is_ignored(self, tmp_path: Path) -> None:
        host_dir = tmp_path / "host-lm"
        _write(host_dir, "/conversations/1756461600000.conversation.json", b"{}")
        root = tmp_path / "root"
        (root / "home" / "a").mkdir(parents=True)
        (root / "home" / "a" / ".lmstudio").symlink_to(host_dir, target_is_directory=True)
        assert lmstudio_homes(root, OsProfile.LINUX, ["/home/a"]) == []


# ---------------------------------------------------------------------------
# Linux corpus
# ---------------------------------------------------------------------------


class TestLinuxScan:
    def test_profile_homes_and_overrides(self, linux_scan: ScanReport) -> None:
        assert linux_scan.os_profile is OsProfile.LINUX
        assert linux_scan.homes == ["/home/alice", "/root"]
        assert linux_scan.lm_homes == ["/home/alice/.lmstudio"]
        assert {(b.name, b.value) for b in linux_scan.env_overrides} == {
            ("OLLAMA_DEBUG", "1"),
            ("OLLAMA_HOST", "0.0.0.0:11434"),
            ("OLLAMA_MODELS", "/srv/ollama/models"),
        }
        assert len(linux_scan.env_overrides) == 3

    def test_home_pointer_payload(self, linux_scan: ScanReport) -> None:
        pointer = "/home/alice/.lmstudio-home-pointer"
        assert linux_scan.home_pointers == {pointer: "/home/alice/.lmstudio"}
        (finding,) = [f for f in linux_scan.findings if f.resolved_path == pointer]
        assert finding.status is FindingStatus.PARSED
        assert finding.payload_ref == f"home_pointers:{pointer}"

    def test_every_planted_artifact_is_found(
        self, linux_scan: ScanReport, linux_corpus: tuple[Path, SynthesisManifest]
    ) -> None:
        _, manifest = linux_corpus
        keys = _finding_keys(linux_scan)
        missing = [(p.descriptor_id, p.path) for p in manifest.planted
                   if (p.descriptor_id, p.path) not in keys]
        assert missing == []

    def test_no_duplicate_findings(self, linux_scan: ScanReport) -> None:
        paths = [f.resolved_path for f in linux_scan.findings]
        assert len(paths) == len(set(paths))

    def test_parsed_findings_point_at_payloads(self, linux_scan: ScanReport) -> None:
        for f in linux_scan.findings:
            assert (f.status is FindingStatus.PARSED) == (f.payload_ref is not None)

    def test_manifests_verified(self, linux_scan: ScanReport) -> None:
        refs = sorted(str(m.model_ref) for m in linux_scan.manifests)
        assert refs == [
            "registry.ollama.ai/library/phi3:mini",
            "registry.ollama.ai/library/tinyllama:latest",
        ]
        assert len(linux_scan.blob_verifications) == 2
        for v in linux_scan.blob_verifications:
            assert all(c.status is BlobStatus.VERIFIED for c in v.checks)
            assert len(v.checks) == 3

    def test_model_files_and_refs(self, linux_scan: ScanReport) -> None:
        by_tool: dict[Tool, list[str]] = {}
        for m in linux_scan.model_files:
            assert m.fingerprint is not None
            by_tool.setdefault(m.tool, []).append(m.fingerprint.architecture or "")
        assert sorted(by_tool[Tool.OLLAMA]) == ["llama", "phi3"]
        assert by_tool[Tool.LMSTUDIO] == ["qwen2"]
        assert by_tool[Tool.LLAMACPP] == ["phi3"]
        tiny = next(
            m for m in linux_scan.model_files
            if m.tool is Tool.OLLAMA and m.fingerprint and m.fingerprint.architecture == "llama"
        )
        assert tiny.model_refs == ["registry.ollama.ai/library/tinyllama:latest"]
        assert tiny.fingerprint is not None
        assert tiny.fingerprint.context_length == 2048
        assert tiny.fingerprint.quantization == "Q4_K_M"

    def test_lmstudio_sessions(self, linux_scan: ScanReport) -> None:
        lm = [s for s in linux_scan.sessions if s.tool is Tool.LMSTUDIO]
        assert len(lm) == 2
        user_texts = [m.text for s in lm for m in s.messages if m.role is ChatRole.USER]
        assert user_texts == list(PROMPTS)
        assistants = [m for s in lm for m in s.messages if m.role is ChatRole.ASSISTANT]
        assert {m.model_id for m in assistants} == {LM_MODEL_ID}
        assert all(s.created_at is not None for s in lm)

    def test_ollama_history_is_prompts_only(self, linux_scan: ScanReport) -> None:
        (session,) = [s for s in linux_scan.sessions if s.tool is Tool.OLLAMA]
        assert session.prompts_only
        assert [m.text for m in session.messages] == list(PROMPTS)
        assert [p.text for p in linux_scan.ollama_prompts] == list(PROMPTS)

    def test_presets(self, linux_scan: ScanReport) -> None:
        by_name = {p.name: p for p in linux_scan.presets}
        assert set(by_name) == {"Precise", "Storyteller", "Untitled draft"}
        assert by_name["Untitled draft"].notable.system_prompt == "You are a forensic assistant."
        assert by_name["Storyteller"].notable.temperature == 1.1

    def test_invocations(self, linux_scan: ScanReport) -> None:
        runs = linux_scan.invocations
        assert [r.shell for r in runs].count(Shell.ZSH) == 1
        batch = [r for r in runs if r.recoverability is Recoverability.PROMPT_ON_DISK]
        assert [r.prompt for r in batch] == list(BATCH_PROMPTS)
        assert all(r.params == BATCH_PARAMS for r in batch)
        assert batch[0].timestamp is not None
        assert batch[2].timestamp is not None
        assert [r.recoverability for r in runs].count(Recoverability.MEMORY_ONLY) == 1
        assert [r.recoverability for r in runs].count(Recoverability.NO_PROMPT) == 1

    def test_server_logs(self, linux_scan: ScanReport) -> None:
        endpoints = [e.endpoint for e in linux_scan.server_log_events if e.endpoint]
        assert endpoints == [
            "/api/generate", "/api/chat", "/v1/chat/completions", "/v1/models",
        ]
        lm_events = [e for e in linux_scan.server_log_events if "server-logs" in e.source_path]
        assert {e.month_bound for e in lm_events} == {"2025-08"}
        kinds = [e.kind for e in linux_scan.server_log_events]
        assert kinds.count(LogEventKind.SHUTDOWN) == 1
        assert kinds.count(LogEventKind.MODEL_LOAD) == 1

    def test_lmstudio_internals(self, linux_scan: ScanReport) -> None:
        inventory = linux_scan.internal_inventory["/home/alice/.lmstudio"]
        assert inventory.sustained_api_usage
        assert inventory.retrieval_sessions.file_count == 2
        samples = inventory.parsed_documents_cache.extracted_text_samples or []
        assert "Quarterly revenue grew twelve percent in the northern region" in samples
        assert inventory.credentials.digests is not None
        hub = [m for m in linux_scan.models if m.tree is ModelTree.HUB]
        assert sorted(m.repo for m in hub) == ["erased-llm", "tiny-llm"]

    def test_secrets_never_in_report(self, linux_scan: ScanReport) -> None:
        assert SECRET_MARKER not in linux_scan.model_dump_json()

    def test_sqlite_sighting(self, linux_scan: ScanReport) -> None:
        (sighting,) = linux_scan.sqlite_sightings
        assert sighting.db_path.endswith("session-0001/index.db")
        assert sighting.header_valid and sighting.wal_present

    def test_installs(self, linux_scan: ScanReport) -> None:
        kinds = {(i.tool, i.kind, i.path) for i in linux_scan.installs}
        assert (Tool.OLLAMA, InstallKind.BINARY, "/usr/local/bin/ollama") in kinds
        assert (
            Tool.OLLAMA, InstallKind.SERVICE_UNIT, "/etc/systemd/system/ollama.service"
        ) in kinds
        assert (
            Tool.LMSTUDIO, InstallKind.BINARY,
            "/home/alice/Applications/LM-Studio-0.3.5-2-x64.AppImage",
        ) in kinds
        assert (
            Tool.LMSTUDIO, InstallKind.HOME_POINTER, "/home/alice/.lmstudio-home-pointer"
        ) in kinds

    def test_scan_metadata(self, linux_scan: ScanReport) -> None:
        assert linux_scan.scan_time == fixed_clock()
        assert linux_scan.custody_digest is not None
        assert linux_scan.tool_version

    def test_evidence_untouched(
        self, linux_scan: ScanReport, linux_corpus: tuple[Path, SynthesisManifest]
    ) -> None:
        root, manifest = linux_corpus
        assert tree_digest(root) == manifest.tree_digest

    def test_worker_count_does_not_change_output(
        self, linux_scan: ScanReport, linux_corpus: tuple[Path, SynthesisManifest]
    ) -> None:
        root, _ = linux_corpus
        serial = scan(root, options=ScanOptions(clock=fixed_clock, workers=1))
        assert serial.findings == linux_scan.findings
        assert serial.custody_digest == linux_scan.custody_digest


# ---------------------------------------------------------------------------
# Windows corpus
# ---------------------------------------------------------------------------


class TestWindowsScan:
    def test_profile_and_homes(self, windows_scan: ScanReport) -> None:
        assert windows_scan.os_profile is OsProfile.WINDOWS
        assert windows_scan.homes == ["/Users/carol"]
        assert windows_scan.lm_homes == ["/Users/carol/.lmstudio"]

    def test_windows_home_pointer_is_rerooted(self, windows_scan: ScanReport) -> None:
        assert windows_scan.home_pointers == {
            "/Users/carol/.lmstudio-home-pointer": "/Users/carol/.lmstudio"
        }

    def test_every_planted_artifact_is_found(
        self, windows_scan: ScanReport, windows_corpus: tuple[Path, SynthesisManifest]
    ) -> None:
        _, manifest = windows_corpus
        keys = _finding_keys(windows_scan)
        missing = [(p.descriptor_id, p.path) for p in manifest.planted
                   if (p.descriptor_id, p.path) not in keys]
        assert missing == []

    def test_drive_letter_override_store(self, windows_scan: ScanReport) -> None:
        (binding,) = windows_scan.env_overrides
        assert binding.value == "D:\\ollama\\models"
        assert binding.source_kind == "powershell-profile"
        sources = sorted(m.source_path for m in windows_scan.manifests)
        assert sources[0].startswith("/Users/carol/.ollama/")
        assert sources[1] == "/ollama/models/manifests/registry.ollama.ai/library/phi3/mini"

    def test_powershell_and_git_bash_runs(self, windows_scan: ScanReport) -> None:
        ps = [r for r in windows_scan.invocations if r.shell is Shell.POWERSHELL]
        assert [r.prompt for r in ps if r.prompt] == list(BATCH_PROMPTS)
        assert all(r.binary == ".\\llama-cli.exe" for r in ps)
        assert any(r.shell is Shell.BASH for r in windows_scan.invocations)

    def test_prefetch_installs(self, windows_scan: ScanReport) -> None:
        prefetch = {
            (i.tool, i.detail) for i in windows_scan.installs
            if i.kind is InstallKind.PREFETCH_NAME
        }
        assert prefetch == {
            (Tool.OLLAMA, "OLLAMA.EXE"),
            (Tool.LMSTUDIO, "LM STUDIO.EXE"),
            (Tool.LLAMACPP, "LLAMA-CLI.EXE"),
        }

    def test_pagefile_collected(self, windows_scan: ScanReport) -> None:
        assert ("system-pagefile", "/pagefile.sys") in _finding_keys(windows_scan)


# ---------------------------------------------------------------------------
# Options and refusals
# ---------------------------------------------------------------------------


class TestScanOptions:
    def test_no_hash_bulk(self, linux_corpus: tuple[Path, SynthesisManifest]) -> None:
        root, _ = linux_corpus
        report = scan(root, options=ScanOptions(clock=fixed_clock, hash_bulk=False))
        blobs = [f for f in report.findings if f.descriptor_id == "ollama-blobs"]
        assert blobs and all(f.digest is None for f in blobs)
        assert report.blob_verifications == []
        assert any("blob verification skipped" in w for w in report.warnings)
        history = next(f for f in report.findings if f.descriptor_id == "ollama-history")
        assert history.digest is not None

    def test_max_file_size(self, linux_corpus: tuple[Path, SynthesisManifest]) -> None:
        root, _ = linux_corpus
        report = scan(root, options=ScanOptions(clock=fixed_clock, max_file_size=64))
        history = next(f for f in report.findings if f.descriptor_id == "ollama-history")
        assert history.status is FindingStatus.PRESENT_UNPARSED
        assert history.digest is not None
        assert report.ollama_prompts == []

    def test_custody_file(
        self, tmp_path: Path, linux_corpus: tuple[Path, SynthesisManifest]
    ) -> None:
        root, _ = linux_corpus
        custody = tmp_path / "custody.jsonl"
        report = scan(root, options=ScanOptions(clock=fixed_clock, custody_path=custody))
        lines = custody.read_bytes().splitlines()
        assert len(lines) == len(report.findings)
        assert verify_custody_file(custody) is None
        last = json.loads(lines[-1])
        assert report.custody_digest is not None
        assert last["entry_hash"] == report.custody_digest.hex

    def test_custody_under_root_refused(
        self, linux_corpus: tuple[Path, SynthesisManifest]
    ) -> None:
        root, _ = linux_corpus
        with pytest.raises(ValueError, match="must not live under"):
            scan(root, options=ScanOptions(custody_path=root / "custody.jsonl"))

    def test_missing_root(self, tmp_path: Path) -> None:
        with pytest.raises(ValueError, match="not a directory"):
            scan(tmp_path / "nope")

    def test_broken_manifest_is_corrupt(self, tmp_path: Path) -> None:
        _write(tmp_path, "/etc/hostname", b"x\n")
        _write(tmp_path, "/home/a/.ollama/history", b"hi\n")
        manifest = _write(
            tmp_path, "/home/a/.ollama/models/manifests/registry.ollama.ai/library/m/latest", b"{"
        )
        report = scan(tmp_path, options=ScanOptions(clock=fixed_clock))
        (finding,) = [f for f in report.findings if f.resolved_path.endswith("/m/latest")]
        assert finding.status is FindingStatus.CORRUPT
        assert finding.digest == Digest.of(manifest.read_bytes())
        assert any("ManifestError" in w for w in report.warnings)

    def test_volume_mapping(self, tmp_path: Path) -> None:
        root = tmp_path / "root"
        volume = tmp_path / "d-drive"
        (root / "Windows" / "System32").mkdir(parents=True)
        _write(
            root,
            "/Users/bob/Documents/PowerShell/profile.ps1",
            b'$env:OLLAMA_MODELS = "D:\\models"\r\n',
        )
        _write(volume, "/models/manifests/registry.ollama.ai/library/m/latest", b"{}")
        report = scan(root, options=ScanOptions(clock=fixed_clock, volumes={"D": volume}))
        assert ("ollama-manifests", "D:/models/manifests/registry.ollama.ai/library/m/latest") in (
            _finding_keys(report)
        )


class TestDetectInstalls:
    def test_empty_root(self, tmp_path: Path) -> None:
        assert detect_installs(tmp_path, OsProfile.LINUX, []) == []

    def test_windows_data_directory(self, tmp_path: Path) -> None:
        (tmp_path / "Users" / "c" / "AppData" / "Local" / "Programs").mkdir(parents=True)
        (tmp_path / "Users" / "c" / "AppData" / "Local" / "Ollama").mkdir()
        installs = detect_installs(tmp_path, OsProfile.WINDOWS, ["/Users/c"])
        assert [(i.kind, i.path) for i in installs] == [
            (InstallKind.DATA_DIRECTORY, "/Users/c/AppData/Local/Ollama")
        ]
