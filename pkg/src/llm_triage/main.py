"""``llmtriage`` command line.

Every subcommand returns an exit code: 0 clean, 2 finished with warnings,
1 failed. Machine output goes to stdout (or ``--out``); logs go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any

from pydantic import BaseModel

from llm_triage import __version__, config
from llm_triage.analyzers import gguf, llamacpp, lmstudio, ollama
from llm_triage.carver import CarveReadError, carve_gguf, extract_strings, keyword_search
from llm_triage.catalog import OsProfile, Tool, catalog_entries, is_within
from llm_triage.errors import TriageError
from llm_triage.evidence import verify_custody_file
from llm_triage.report import ReportFormat, emit_report, load_report, write_report
from llm_triage.scanner import ScanOptions, scan
from llm_triage.synth import plant_image, synthesize_tree
from llm_triage.synth.image import DEFAULT_IMAGE_SIZE, default_plan

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_WARNINGS = 2

_OS_CHOICES = {"auto": None, "linux": OsProfile.LINUX, "windows": OsProfile.WINDOWS}


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _to_bytes(payload: Any) -> bytes:
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    elif isinstance(payload, list):
        payload = [p.model_dump(mode="json") if isinstance(p, BaseModel) else p for p in payload]
    return (json.dumps(payload, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def _emit(data: bytes, out: Path | None) -> None:
    if out is None:
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        write_report(data, out)


def _status(warnings: list[str]) -> int:
    if warnings:
        log.warning("finished with %d warning(s)", len(warnings))
        return EXIT_WARNINGS
    return EXIT_OK


def _under(path: Path, root: Path) -> bool:
    return is_within(Path(os.path.abspath(path)), Path(os.path.abspath(root)))


def _parse_volume(value: str) -> tuple[str, Path]:
    drive, sep, directory = value.partition("=")
    if not sep or len(drive) != 1 or not drive.isalpha():
        raise argparse.ArgumentTypeError(f"expected LETTER=DIR, got {value!r}")
    return drive.upper(), Path(directory)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_catalog(args: argparse.Namespace) -> int:
    tool = Tool(args.tool) if args.tool else None
    entries = catalog_entries(tool=tool, os_profile=_OS_CHOICES[args.os])
    _emit(_to_bytes(entries), args.out)
    return EXIT_OK


def cmd_scan(args: argparse.Namespace) -> int:
    root: Path = args.root
    for label, path in (("--out", args.out), ("--custody", args.custody)):
        if path is not None and _under(path, root):
            log.error("%s %s is inside the scanned root %s; refusing to write there", label,
                      path, root)
            return EXIT_ERROR
    if args.local_tz:
        config.LOCAL_TZ = args.local_tz
    if args.actor:
        config.CUSTODY_ACTOR = args.actor
    options = ScanOptions(
        follow_symlinks=args.follow_symlinks,
        max_file_size=args.max_file_size,
        hash_bulk=not args.no_hash_blobs,
        workers=args.workers,
        record_access_times=args.atime,
        custody_path=args.custody,
        volumes=dict(args.volume or []),
    )
    result = scan(root, _OS_CHOICES[args.os], options)
    _emit(emit_report(result, fmt=ReportFormat(args.format)), args.out)
    return _status(result.warnings)


def cmd_gguf_inspect(args: argparse.Namespace) -> int:
    metadata = gguf.parse_file(args.path)
    fp = gguf.fingerprint_file(args.path)
    if args.json:
        doc = {
            "header": metadata.header.model_dump(mode="json"),
            "metadata_size": metadata.metadata_size,
            "fingerprint": fp.model_dump(mode="json"),
            "kvs": gguf.dump_kvs(metadata),
        }
        _emit(_to_bytes(doc), None)
        return EXIT_OK
    h = metadata.header
    print(f"{args.path}: GGUF v{h.version}, {h.tensor_count} tensor(s), {h.kv_count} key(s)")
    for field, value in fp.model_dump(mode="json").items():
        print(f"  {field:<18} {value}")
    return EXIT_OK


def cmd_ollama(args: argparse.Namespace) -> int:
    report = ollama.analyze_home(args.home, verify=args.verify_blobs)
    _emit(_to_bytes(report), args.out)
    return _status(report.warnings)


def cmd_lmstudio(args: argparse.Namespace) -> int:
    report = lmstudio.analyze_home(args.home, samples=args.samples)
    _emit(_to_bytes(report), args.out)
    return _status(report.warnings)


def cmd_llamacpp(args: argparse.Namespace) -> int:
    warnings: list[str] = []
    invocations = llamacpp.parse_shell_history(
        args.history.read_bytes(), llamacpp.Shell(args.shell), str(args.history),
        warnings=warnings,
    )
    _emit(_to_bytes(invocations), args.out)
    return _status(warnings)


def cmd_carve(args: argparse.Namespace) -> int:
    with args.image.open("rb") as f:
        try:
            hits = carve_gguf(f, aligned=args.aligned, block=args.block)
        except CarveReadError as exc:
            log.error("%s", exc)
            _emit(_to_bytes(exc.hits), args.out)
            return EXIT_ERROR
    _emit(_to_bytes(hits), args.out)
    return EXIT_OK


def cmd_memscan(args: argparse.Namespace) -> int:
    with args.dump.open("rb") as f:
        if args.keyword:
            hits = keyword_search(
                f, args.keyword, case_sensitive=not args.ignore_case, min_len=args.min_len,
                block=args.block,
            )
        else:
            hits = list(extract_strings(f, args.min_len, block=args.block))
    _emit(_to_bytes(hits), args.out)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    report = load_report(args.scan)
    fmt = ReportFormat(args.format)
    _emit(report.to_json() if fmt is ReportFormat.JSON else report.to_csv(), args.out)
    return _status(report.warnings)


def cmd_synth(args: argparse.Namespace) -> int:
    manifest = synthesize_tree(args.seed, OsProfile(args.os), args.out)
    manifest_path = args.out.with_name(args.out.name + ".manifest.json")
    write_report(manifest.to_json(), manifest_path)
    if args.image is not None:
        payloads, offsets = default_plan(args.seed)
        truth = plant_image(payloads, args.image_size, offsets, args.image)
        write_report(truth.to_json(), args.image.with_name(args.image.name + ".truth.json"))
    return EXIT_OK


def cmd_custody_verify(args: argparse.Namespace) -> int:
    broken = verify_custody_file(args.log)
    if broken is None:
        print(f"{args.log}: chain intact")
        return EXIT_OK
    print(f"{args.log}: chain broken at entry {broken}")
    return EXIT_ERROR


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _help(p: argparse.ArgumentParser) -> Callable[[argparse.Namespace], int]:
    """Return a handler that prints help for parser ``p`` (the default func)."""

    def _print_help(_: argparse.Namespace) -> int:
        p.print_help()
        return EXIT_ERROR

    return _print_help


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="llmtriage",
        description="Forensic triage of local LLM runners (Ollama, LM Studio, llama.cpp).",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.set_defaults(func=_help(parser))
    sub = parser.add_subparsers(dest="command", required=False)

    catalog_p = sub.add_parser("catalog", help="Artifact catalog")
    catalog_sub = catalog_p.add_subparsers(dest="catalog_command", required=False)
    catalog_p.set_defaults(func=_help(catalog_p))
    dump_p = catalog_sub.add_parser("dump", help="Print the catalog as JSON")
    dump_p.add_argument("--tool", choices=[t.value for t in Tool], default=None)
    dump_p.add_argument("--os", choices=list(_OS_CHOICES), default="auto",
                        help="Keep entries for this OS plus the OS-independent ones")
    dump_p.add_argument("--out", type=Path, default=None)
    dump_p.set_defaults(func=cmd_catalog)

    scan_p = sub.add_parser("scan", help="Triage a mounted filesystem root (read-only)")
    scan_p.add_argument("--root", type=Path, required=True, help="Mounted evidence root")
    scan_p.add_argument("--os", choices=list(_OS_CHOICES), default="auto")
    scan_p.add_argument("--out", type=Path, default=None, help="Report file (default: stdout)")
    scan_p.add_argument("--format", choices=[f.value for f in ReportFormat], default="json")
    scan_p.add_argument("--custody", type=Path, default=None, help="Custody log (JSONL)")
    scan_p.add_argument("--no-hash-blobs", action="store_true",
                        help="Skip content hashing of model weights and memory stand-ins")
    scan_p.add_argument("--workers", type=int, default=None, help="Collector threads")
    scan_p.add_argument("--atime", action="store_true", help="Record access times")
    scan_p.add_argument("--follow-symlinks", action="store_true")
    scan_p.add_argument("--max-file-size", type=int, default=None,
                        help="Bytes; larger files are hashed but not parsed")
    scan_p.add_argument("--volume", type=_parse_volume, action="append",
                        help="Map a drive letter to a host directory, e.g. D=/mnt/d")
    scan_p.add_argument("--local-tz", default=None,
                        help="IANA zone for log timestamps without an offset")
    scan_p.add_argument("--actor", default=None, help="Examiner recorded in the custody log")
    scan_p.set_defaults(func=cmd_scan)

    gguf_p = sub.add_parser("gguf", help="GGUF model files")
    gguf_sub = gguf_p.add_subparsers(dest="gguf_command", required=False)
    gguf_p.set_defaults(func=_help(gguf_p))
    inspect_p = gguf_sub.add_parser("inspect", help="Header, fingerprint and metadata")
    inspect_p.add_argument("path", type=Path)
    inspect_p.add_argument("--json", action="store_true")
    inspect_p.set_defaults(func=cmd_gguf_inspect)

    ollama_p = sub.add_parser("ollama", help="Analyse an .ollama directory")
    ollama_p.add_argument("--home", type=Path, required=True)
    ollama_p.add_argument("--verify-blobs", action="store_true")
    ollama_p.add_argument("--out", type=Path, default=None)
    ollama_p.set_defaults(func=cmd_ollama)

    lm_p = sub.add_parser("lmstudio", help="Analyse an LM Studio home")
    lm_p.add_argument("--home", type=Path, required=True)
    lm_p.add_argument("--samples", type=int, default=None,
                      help="Text samples kept from the parsed-documents cache")
    lm_p.add_argument("--out", type=Path, default=None)
    lm_p.set_defaults(func=cmd_lmstudio)

    llama_p = sub.add_parser("llamacpp", help="Reconstruct llama.cpp runs from shell history")
    llama_p.add_argument("--history", type=Path, required=True)
    llama_p.add_argument("--shell", choices=[s.value for s in llamacpp.Shell], required=True)
    llama_p.add_argument("--out", type=Path, default=None)
    llama_p.set_defaults(func=cmd_llamacpp)

    carve_p = sub.add_parser("carve", help="Find GGUF headers in a raw image")
    carve_p.add_argument("--image", type=Path, required=True)
    carve_p.add_argument("--aligned", action="store_true", help="Sector-aligned hits only")
    carve_p.add_argument("--block", type=int, default=None, help="Read size in bytes")
    carve_p.add_argument("--out", type=Path, default=None)
    carve_p.set_defaults(func=cmd_carve)

    mem_p = sub.add_parser("memscan", help="Strings and keyword search over a memory dump")
    mem_p.add_argument("--dump", type=Path, required=True)
    mem_p.add_argument("--keyword", action="append", default=[],
                       help="Repeatable; without it every string is listed")
    mem_p.add_argument("--ignore-case", action="store_true")
    mem_p.add_argument("--min-len", type=int, default=None)
    mem_p.add_argument("--block", type=int, default=None)
    mem_p.add_argument("--out", type=Path, default=None)
    mem_p.set_defaults(func=cmd_memscan)

    report_p = sub.add_parser("report", help="Re-render a saved JSON scan report")
    report_p.add_argument("--scan", type=Path, required=True, help="JSON report from scan")
    report_p.add_argument("--format", choices=[f.value for f in ReportFormat], default="json")
    report_p.add_argument("--out", type=Path, default=None)
    report_p.set_defaults(func=cmd_report)

    synth_p = sub.add_parser("synth", help="Build a synthetic evidence corpus")
    synth_p.add_argument("--seed", type=int, required=True)
    synth_p.add_argument("--os", choices=[OsProfile.LINUX.value, OsProfile.WINDOWS.value],
                         required=True)
    synth_p.add_argument("--out", type=Path, required=True, help="Empty output directory")
    synth_p.add_argument("--image", type=Path, default=None,
                         help="Also write a raw image with planted GGUF files")
    synth_p.add_argument("--image-size", type=int, default=DEFAULT_IMAGE_SIZE)
    synth_p.set_defaults(func=cmd_synth)

    custody_p = sub.add_parser("custody", help="Chain-of-custody logs")
    custody_sub = custody_p.add_subparsers(dest="custody_command", required=False)
    custody_p.set_defaults(func=_help(custody_p))
    verify_p = custody_sub.add_parser("verify", help="Check a custody log's hash chain")
    verify_p.add_argument("log", type=Path)
    verify_p.set_defaults(func=cmd_custody_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)-5s %(name)s | %(message)s",
        datefmt="%H:%M:%S",
        stream=sys.stderr,
    )
    try:
        code: int = args.func(args)
    except (TriageError, ValueError, OSError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_ERROR
    return code


if __name__ == "__main__":
    sys.exit(main())
