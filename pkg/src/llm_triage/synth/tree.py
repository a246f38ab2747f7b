"""Build a synthetic subject filesystem with known ground truth.

Every run of the same ``(seed, os_profile)`` produces byte-identical file
contents and modification times. The returned manifest lists each planted
artifact with the facts a scan is expected to recover from it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
from datetime import UTC, datetime, timedelta
from pathlib import Path
from typing import Any

from pydantic import BaseModel

from llm_triage import config
from llm_triage.catalog import OsProfile
from llm_triage.evidence import Digest, hash_file
from llm_triage.synth import script
from llm_triage.synth.gguf import GgufParams, synthesize_gguf

log = logging.getLogger(__name__)

# Start of the scripted session; every planted timestamp is an offset from here.
SYNTH_EPOCH = datetime(2025, 8, 29, 0, 0, tzinfo=UTC)

LINUX_USER = "alice"
WINDOWS_USER = "carol"
LM_MODEL_ID = "acme/tiny-llm-GGUF"
MEMORY_SIZE = 1024 * 1024

SQLITE_HEADER_PAGE = b"SQLite format 3\x00" + bytes.fromhex("1000") + bytes(4096 - 18)
# WAL header: magic, format version, page size; remainder zero.
SQLITE_WAL_HEADER = bytes.fromhex("377f0682002de218") + (4096).to_bytes(4, "big") + bytes(20)


class PlantedItem(BaseModel):
    descriptor_id: str
    # Image path (inside the synthetic evidence).
    path: str
    detail: dict[str, Any] = {}


class SynthesisManifest(BaseModel):
    seed: int
    os_profile: OsProfile
    planted: list[PlantedItem] = []
    tree_digest: Digest | None = None

    def descriptor_ids(self) -> set[str]:
        return {p.descriptor_id for p in self.planted}

    def items(self, descriptor_id: str) -> list[PlantedItem]:
        return [p for p in self.planted if p.descriptor_id == descriptor_id]

    def to_json(self) -> bytes:
        return (self.model_dump_json(indent=2) + "\n").encode("utf-8")


def tree_digest(root: Path) -> Digest:
    """One digest over every file's relative path and content digest."""
    h = hashlib.sha256()
    files = sorted(p for p in root.rglob("*") if p.is_file() and not p.is_symlink())
    for path in files:
        rel = path.relative_to(root).as_posix()
        h.update(rel.encode("utf-8") + b"\x00" + hash_file(path).value)
    return Digest(value=h.digest())


def memory_image(
    rng: random.Random, size: int, strings: list[str]
) -> tuple[bytes, list[dict[str, Any]]]:
    """Pseudorandom bytes with each string planted once as ASCII and once as UTF-16LE.

    Planted strings are fenced by NUL bytes so string extraction reports
    them at exactly the recorded offsets.
    """
    buf = bytearray(rng.randbytes(size))
    placements: list[dict[str, Any]] = []
    slot = size // (2 * len(strings) + 1)
    for i, text in enumerate(strings):
        for j, (encoding, raw) in enumerate(
            (("ascii", text.encode("ascii")), ("utf-16le", text.encode("utf-16-le")))
        ):
            offset = slot * (2 * i + j + 1)
            fenced = b"\x00\x00" + raw + b"\x00\x00"
            buf[offset : offset + len(fenced)] = fenced
            placements.append({"text": text, "encoding": encoding, "offset": offset + 2})
    return bytes(buf), placements


class _Planter:
    """Writes files under ``out_root`` and records what went where."""

    def __init__(self, out_root: Path, seed: int, os_profile: OsProfile) -> None:
        self.root = out_root
        self.rng = random.Random(seed)
        self.manifest = SynthesisManifest(seed=seed, os_profile=os_profile)
        self.files: list[Path] = []

    def host(self, image: str) -> Path:
        return self.root / image.lstrip("/")

    def write(
        self, image: str, data: bytes, descriptor_id: str | None = None, **detail: Any
    ) -> Path:
        path = self.host(image)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        self.files.append(path)
        if descriptor_id is not None:
            self.manifest.planted.append(
                PlantedItem(descriptor_id=descriptor_id, path=image, detail=detail)
            )
        return path

    def write_json(
        self, image: str, doc: Any, descriptor_id: str | None = None, **detail: Any
    ) -> Path:
        data = json.dumps(doc, indent=2, ensure_ascii=False).encode("utf-8")
        return self.write(image, data, descriptor_id, **detail)

    def sparse(self, image: str, size: int, descriptor_id: str, **detail: Any) -> Path:
        path = self.host(image)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as f:
            f.truncate(size)
        self.files.append(path)
        self.manifest.planted.append(
            PlantedItem(descriptor_id=descriptor_id, path=image, detail=detail)
        )
        return path

    def mkdir(self, image: str) -> None:
        self.host(image).mkdir(parents=True, exist_ok=True)

    def stamp_times(self) -> None:
        """Deterministic mtimes: one minute apart in write order."""
        for i, path in enumerate(self.files):
            t = (SYNTH_EPOCH + timedelta(minutes=i)).timestamp()
            os.utime(path, (t, t))


# ---------------------------------------------------------------------------
# Ollama
# ---------------------------------------------------------------------------


def _plant_ollama_store(
    p: _Planter, store: str, model: str, tag: str, params: GgufParams
) -> None:
    weights = synthesize_gguf(params) + p.rng.randbytes(4096)
    model_config = json.dumps(
        {"model_format": "gguf", "model_family": params.arch, "file_type": params.quantization},
        sort_keys=True,
    ).encode()
    template = b"{{ .System }}\n{{ .Prompt }}\n# " + p.rng.randbytes(16).hex().encode()
    blobs = [
        ("application/vnd.docker.container.image.v1+json", model_config),
        ("application/vnd.ollama.image.model", weights),
        ("application/vnd.ollama.image.template", template),
    ]
    digests = [Digest.of(data) for _, data in blobs]
    for (media_type, data), digest in zip(blobs, digests, strict=True):
        p.write(
            f"{store}/blobs/sha256-{digest.hex}",
            data,
            "ollama-blobs",
            digest=digest.hex,
            media_type=media_type,
            gguf=media_type.endswith(".model"),
        )
    document = {
        "schemaVersion": 2,
        "mediaType": "application/vnd.docker.distribution.manifest.v2+json",
        "config": {
            "mediaType": blobs[0][0],
            "digest": f"sha256:{digests[0].hex}",
            "size": len(blobs[0][1]),
        },
        "layers": [
            {"mediaType": media_type, "digest": f"sha256:{digest.hex}", "size": len(data)}
            for (media_type, data), digest in zip(blobs[1:], digests[1:], strict=True)
        ],
    }
    p.write_json(
        f"{store}/manifests/registry.ollama.ai/library/{model}/{tag}",
        document,
        "ollama-manifests",
        model_ref=f"registry.ollama.ai/library/{model}:{tag}",
        config_digest=digests[0].hex,
        layer_digests=[d.hex for d in digests[1:]],
    )


def _plant_ollama_home(p: _Planter, home: str) -> None:
    _plant_ollama_store(
        p,
        f"{home}/.ollama/models",
        "tinyllama",
        "latest",
        GgufParams(
            arch="llama", name="TinyLlama", quantization="Q4_K_M", context_length=2048,
            embedding_length=2048, size_label="1.1B", tokens=("<s>", "</s>", "hello"),
            tensor_count=3,
        ),
    )
    history = "".join(f"{prompt}\n" for prompt in script.PROMPTS).encode()
    p.write(f"{home}/.ollama/history", history, "ollama-history", prompts=list(script.PROMPTS))

    day = SYNTH_EPOCH.strftime("%Y-%m-%d")
    gin_day = SYNTH_EPOCH.strftime("%Y/%m/%d")
    lines = [
        f'time={day}T10:00:00.000+10:00 level=INFO source=routes.go:1200 '
        f'msg="Listening on 127.0.0.1:11434 (version 0.3.6)"',
        f'time={day}T10:01:00.000+10:00 level=INFO source=server.go:600 msg="loading model" '
        f"model={home}/.ollama/models/blobs",
        f'[GIN] {gin_day} - 10:01:05 | 200 |  1.204s |       127.0.0.1 | POST     "/api/generate"',
        f'[GIN] {gin_day} - 10:02:10 | 200 |  2.511s |       127.0.0.1 | POST     "/api/chat"',
        f'time={day}T10:03:00.000+10:00 level=INFO source=sched.go:300 msg="unloading"',
        f'time={day}T10:30:00.000+10:00 level=INFO source=routes.go:1300 msg="shutting down"',
    ]
    p.write(
        f"{home}/.ollama/logs/server.log",
        ("\n".join(lines) + "\n").encode(),
        "ollama-server-log",
        startup=1,
        model_load=1,
        api_requests=["/api/generate", "/api/chat"],
        shutdown=1,
        other=1,
    )


# ---------------------------------------------------------------------------
# LM Studio
# ---------------------------------------------------------------------------


def _conversation(prompts: list[str], responses: list[str], title: str) -> dict[str, Any]:
    messages: list[dict[str, Any]] = []
    for prompt, response in zip(prompts, responses, strict=True):
        if script.KEYWORD in prompt:
            head, _, _ = prompt.partition(script.KEYWORD)
            # split mid-keyword: the UI stores edited prompts as several segments
            content = [
                {"type": "text", "text": head + script.KEYWORD[:9]},
                {"type": "text", "text": script.KEYWORD[9:]},
            ]
        else:
            content = [{"type": "text", "text": prompt}]
        messages.append(
            {
                "versions": [{"type": "singleStep", "role": "user", "content": content}],
                "currentlySelected": 0,
            }
        )
        messages.append(
            {
                "versions": [
                    {
                        "type": "multiStep",
                        "role": "assistant",
                        "steps": [
                            {
                                "type": "contentBlock",
                                "content": [{"type": "text", "text": response}],
                            }
                        ],
                        "senderInfo": {"senderName": LM_MODEL_ID},
                    }
                ],
                "currentlySelected": 0,
            }
        )
    return {
        "name": title,
        "pinned": False,
        "messages": messages,
        "preset": {"temperature": 0.8, "contextLength": 4096},
    }


def _plant_lmstudio_home(p: _Planter, lm_home: str) -> None:
    halves = ((0, 5, "Cooking and code"), (5, 10, "General questions"))
    for i, (lo, hi, title) in enumerate(halves):
        created = SYNTH_EPOCH + timedelta(hours=11, minutes=15 * i)
        stem = int(created.timestamp() * 1000)
        prompts = list(script.PROMPTS[lo:hi])
        responses = list(script.RESPONSES[lo:hi])
        p.write_json(
            f"{lm_home}/conversations/{stem}.conversation.json",
            _conversation(prompts, responses, title),
            "lmstudio-conversations",
            created_at=created.isoformat(),
            title=title,
            prompts=prompts,
            responses=responses,
            model_id=LM_MODEL_ID,
        )

    weights = synthesize_gguf(
        GgufParams(
            arch="qwen2", name="Tiny LLM", quantization="Q4_K_M", context_length=32768,
            embedding_length=896, size_label="0.5B", tensor_count=2,
        )
    )
    p.write(
        f"{lm_home}/models/acme/tiny-llm-GGUF/tiny-llm.Q4_K_M.gguf",
        weights + p.rng.randbytes(2048),
        "lmstudio-models",
        architecture="qwen2",
        quantization="Q4_K_M",
        context_length=32768,
    )
    p.write_json(
        f"{lm_home}/hub/models/acme/tiny-llm/manifest.json",
        {"type": "model", "owner": "acme", "name": "tiny-llm", "revision": 1},
        "lmstudio-hub-models",
        publisher="acme",
        model="tiny-llm",
        weights_present=True,
    )
    p.write_json(
        f"{lm_home}/hub/models/acme/erased-llm/manifest.json",
        {"type": "model", "owner": "acme", "name": "erased-llm", "revision": 3},
        "lmstudio-hub-models",
        publisher="acme",
        model="erased-llm",
        weights_present=False,
    )

    def preset(name: str, system_prompt: str, temperature: float) -> dict[str, Any]:
        return {
            "name": name,
            "operation": {
                "fields": [
                    {"key": "llm.prediction.systemPrompt", "value": system_prompt},
                    {"key": "llm.prediction.temperature", "value": temperature},
                ]
            },
            "load": {"fields": [{"key": "llm.load.contextLength", "value": 4096}]},
        }

    presets = (
        ("config-presets/precise.preset.json", "Precise", "Answer tersely.", 0.2,
         "lmstudio-config-presets"),
        ("hub/presets/acme/storyteller.preset.json", "Storyteller", "Be whimsical.", 1.1,
         "lmstudio-hub-presets"),
        (".internal/config-presets-drafts/draft-1.preset.json", "Untitled draft",
         "You are a forensic assistant.", 0.5, "lmstudio-preset-drafts"),
    )
    for rel, name, system_prompt, temperature, descriptor_id in presets:
        p.write_json(
            f"{lm_home}/{rel}",
            preset(name, system_prompt, temperature),
            descriptor_id,
            name=name,
            system_prompt=system_prompt,
            temperature=temperature,
            context_length=4096,
        )

    month = SYNTH_EPOCH.strftime("%Y-%m")
    stamp = SYNTH_EPOCH.strftime("%Y-%m-%d")
    log_lines = [
        f"[{stamp} 10:05:00][INFO][LM STUDIO SERVER] Success! HTTP server listening on port 1234",
        f"[{stamp} 10:06:00][INFO][LM STUDIO SERVER] Received POST request to "
        f'/v1/chat/completions with body: {{"model": "{LM_MODEL_ID}"}}',
        f"[{stamp} 10:06:02][INFO][{LM_MODEL_ID}] Generated prediction: 391",
        f"[{stamp} 10:07:00][INFO][LM STUDIO SERVER] Received GET request to /v1/models",
    ]
    p.write(
        f"{lm_home}/server-logs/{month}/{stamp}.1.log",
        ("\n".join(log_lines) + "\n").encode(),
        "lmstudio-server-logs",
        month=month,
        startup=1,
        api_requests=["/v1/chat/completions", "/v1/models"],
        other=1,
    )

    sessions = f"{lm_home}/.internal/retrieval-sessions/session-0001"
    p.write(f"{sessions}/index.db", SQLITE_HEADER_PAGE, "lmstudio-rag-retrieval-sessions",
            sqlite=True, wal=True)
    p.write(f"{sessions}/index.db-wal", SQLITE_WAL_HEADER, "lmstudio-rag-retrieval-sessions",
            sidecar=True)
    p.write(
        f"{lm_home}/.internal/cached-rag-pipeline-chunks/chunk-000.bin",
        p.rng.randbytes(2048),
        "lmstudio-rag-pipeline-chunks",
    )
    document_text = "Quarterly revenue grew twelve percent in the northern region"
    p.write(
        f"{lm_home}/.internal/parsed-documents-cache/report.pdf.cache",
        b"\x00\x01\x02PDOC\x00\x00" + document_text.encode() + b"\x00\xff" + p.rng.randbytes(64),
        "lmstudio-rag-parsed-documents",
        text=document_text,
    )
    pack_size = config.PACK_SIZE_THRESHOLD + config.MiB
    p.sparse(
        f"{lm_home}/.internal/api-prediction-history/packs/pack-0001.pack",
        pack_size,
        "lmstudio-api-prediction-history",
        size=pack_size,
        sustained_api_usage=True,
    )
    p.write_json(
        f"{lm_home}/credentials/hub-token.json",
        {"token": script.SECRET_MARKER},
        "lmstudio-credentials",
        secret=True,
    )
    p.write(
        f"{lm_home}/.internal/lms-key-2",
        script.SECRET_MARKER.encode(),
        "lmstudio-cli-key",
        secret=True,
    )
    p.write(
        f"{lm_home}/user-files/notes.txt",
        b"Meeting notes attached to a chat.\n",
        "lmstudio-user-files",
    )
    p.write(f"{lm_home}/.session_cache", p.rng.randbytes(1024), "lmstudio-session-cache")


# ---------------------------------------------------------------------------
# llama.cpp
# ---------------------------------------------------------------------------

_LOOSE_MODEL = GgufParams(
    arch="phi3", name="Phi Mini", quantization="Q8_0", context_length=4096, tensor_count=1
)


def _epoch(minutes: int) -> int:
    return int((SYNTH_EPOCH + timedelta(hours=12, minutes=minutes)).timestamp())


def _plant_bash_history(p: _Planter, home: str, model: str) -> None:
    first, second, _ = script.BATCH_PROMPTS
    lines = [
        "ls -la",
        f"#{_epoch(0)}",
        script.batch_line("./llama-cli", model, first),
        "cd ~/models",
        script.batch_line("llama-cli", model, second),
        f"llama-server -m {model} --port 8080",
        script.interactive_line("./llama-cli", model),
        "git status",
    ]
    p.write(
        f"{home}/.bash_history",
        ("\n".join(lines) + "\n").encode(),
        "llamacpp-bash-history",
        batch_prompts=[first, second],
        timestamps=[datetime.fromtimestamp(_epoch(0), tz=UTC).isoformat()],
        interactive=1,
        no_prompt=1,
        params=script.BATCH_PARAMS,
    )


def _plant_linux_llamacpp(p: _Planter, home: str) -> None:
    model = f"{home}/models/phi-mini.gguf"
    p.write(
        model,
        synthesize_gguf(_LOOSE_MODEL) + p.rng.randbytes(1024),
        "llamacpp-model-files",
        architecture="phi3",
        quantization="Q8_0",
    )
    _plant_bash_history(p, home, "~/models/phi-mini.gguf")
    third = script.BATCH_PROMPTS[2]
    lines = [
        f": {_epoch(10)}:0;cd ~/models",
        f": {_epoch(11)}:3;" + script.batch_line("llama-cli", "phi-mini.gguf", third),
    ]
    p.write(
        f"{home}/.zsh_history",
        ("\n".join(lines) + "\n").encode(),
        "llamacpp-zsh-history",
        batch_prompts=[third],
        timestamps=[datetime.fromtimestamp(_epoch(11), tz=UTC).isoformat()],
        params=script.BATCH_PARAMS,
    )


def _plant_windows_llamacpp(p: _Planter, home: str) -> None:
    p.write(
        f"{home}/models/phi-mini.gguf",
        synthesize_gguf(_LOOSE_MODEL) + p.rng.randbytes(1024),
        "llamacpp-model-files",
        architecture="phi3",
        quantization="Q8_0",
    )
    model = "C:\\Users\\carol\\models\\phi-mini.gguf"
    prompts = list(script.BATCH_PROMPTS)
    lines = [
        "cd C:\\llama.cpp",
        *(script.batch_line(".\\llama-cli.exe", model, prompt, powershell=True)
          for prompt in prompts),
        script.interactive_line(".\\llama-cli.exe", model),
        "Get-ChildItem",
    ]
    p.write(
        f"{home}/AppData/Roaming/Microsoft/Windows/PowerShell/PSReadLine/ConsoleHost_history.txt",
        ("\r\n".join(lines) + "\r\n").encode(),
        "llamacpp-powershell-history",
        batch_prompts=prompts,
        interactive=1,
        params=script.BATCH_PARAMS,
    )
    # Git Bash on the same machine
    _plant_bash_history(p, home, "/c/Users/carol/models/phi-mini.gguf")


# ---------------------------------------------------------------------------
# Layouts
# ---------------------------------------------------------------------------


def _plant_memory(p: _Planter, image: str, descriptor_id: str) -> None:
    data, placements = memory_image(
        p.rng, MEMORY_SIZE, [script.INTERACTIVE_PROMPT, script.PROMPTS[2]]
    )
    p.write(image, data, descriptor_id, placements=placements)


def _plant_linux(p: _Planter) -> None:
    home = f"/home/{LINUX_USER}"
    p.write("/etc/hostname", b"forensic-lab\n")
    p.write(
        "/etc/systemd/system/ollama.service",
        b"[Unit]\nDescription=Ollama Service\nAfter=network-online.target\n\n"
        b"[Service]\nExecStart=/usr/local/bin/ollama serve\nUser=ollama\n"
        b'Environment="OLLAMA_HOST=0.0.0.0:11434"\n\n[Install]\nWantedBy=default.target\n',
        "ollama-service-unit",
        env={"OLLAMA_HOST": "0.0.0.0:11434"},
    )
    p.write(
        "/etc/systemd/system/ollama.service.d/override.conf",
        b'[Service]\nEnvironment="OLLAMA_MODELS=/srv/ollama/models"\n',
        "ollama-service-dropins",
        env={"OLLAMA_MODELS": "/srv/ollama/models"},
    )
    p.write("/usr/local/bin/ollama", b"\x7fELF" + p.rng.randbytes(256))
    p.write("/usr/share/ollama/.ollama/id_ed25519.pub", b"ssh-ed25519 AAAAC3Nza synthetic\n")
    p.mkdir("/root")
    p.write(f"{home}/.bashrc", b"export PATH=$HOME/bin:$PATH\nexport OLLAMA_DEBUG=1\n")
    p.write(f"{home}/Applications/LM-Studio-0.3.5-2-x64.AppImage", b"\x7fELF" + bytes(64))

    _plant_ollama_home(p, home)
    _plant_ollama_store(
        p, "/srv/ollama/models", "phi3", "mini",
        GgufParams(arch="phi3", name="Phi 3 Mini", quantization="Q4_0", tensor_count=1),
    )
    lm_home = f"{home}/.lmstudio"
    p.write(
        f"{home}/.lmstudio-home-pointer",
        lm_home.encode(),
        "lmstudio-home-pointer",
        target=lm_home,
    )
    _plant_lmstudio_home(p, lm_home)
    _plant_linux_llamacpp(p, home)
    _plant_memory(p, "/swap.img", "system-swapfile")


def _plant_windows(p: _Planter) -> None:
    home = f"/Users/{WINDOWS_USER}"
    p.write("/Windows/System32/drivers/etc/hosts", b"127.0.0.1 localhost\r\n")
    prefetch = ("OLLAMA.EXE-1A2B3C4D.pf", "LM STUDIO.EXE-5E6F7A8B.pf", "LLAMA-CLI.EXE-0C1D2E3F.pf")
    for name in prefetch:
        p.write(f"/Windows/Prefetch/{name}", b"MAM\x04" + p.rng.randbytes(128))
    p.write("/Users/Public/desktop.ini", b"[.ShellClassInfo]\r\n")
    p.write(f"{home}/AppData/Local/Ollama/app.log", b"time=2025-08-29T09:59:00Z msg=tray\n")
    p.write(
        f"{home}/Documents/WindowsPowerShell/Microsoft.PowerShell_profile.ps1",
        b'$env:OLLAMA_MODELS = "D:\\ollama\\models"\r\nSet-Alias ll Get-ChildItem\r\n',
    )

    _plant_ollama_home(p, home)
    # D:\ollama\models lands under the root once the drive letter is dropped
    _plant_ollama_store(
        p, "/ollama/models", "phi3", "mini",
        GgufParams(arch="phi3", name="Phi 3 Mini", quantization="Q4_0", tensor_count=1),
    )
    p.write(
        f"{home}/.lmstudio-home-pointer",
        f"C:\\Users\\{WINDOWS_USER}\\.lmstudio".encode(),
        "lmstudio-home-pointer",
        target=f"{home}/.lmstudio",
    )
    _plant_lmstudio_home(p, f"{home}/.lmstudio")
    _plant_windows_llamacpp(p, home)
    _plant_memory(p, "/pagefile.sys", "system-pagefile")


def synthesize_tree(seed: int, os_profile: OsProfile, out_root: Path) -> SynthesisManifest:
    """Create the corpus for ``(seed, os_profile)`` under an empty ``out_root``."""
    if os_profile is OsProfile.ANY:
        raise ValueError("synthesis needs a concrete OS profile (Linux or Windows)")
    if out_root.exists() and any(out_root.iterdir()):
        raise ValueError(f"refusing to synthesize into non-empty directory {out_root}")
    out_root.mkdir(parents=True, exist_ok=True)

    p = _Planter(out_root, seed, os_profile)
    if os_profile is OsProfile.LINUX:
        _plant_linux(p)
    else:
        _plant_windows(p)
    p.stamp_times()
    p.manifest.tree_digest = tree_digest(out_root)
    log.info(
        "synthesized %s corpus (seed %d): %d file(s), %d planted artifact(s)",
        os_profile, seed, len(p.files), len(p.manifest.planted),
    )
    return p.manifest
