"""llama.cpp usage reconstructed from shell history.

llama.cpp writes nothing of its own about a run; the command line in the
user's shell history is the record. Batch runs (``-p``) leave the prompt
there, interactive runs (``-i``) leave nothing but the fact of the run.
"""

from __future__ import annotations

import logging
import re
import shlex
from collections.abc import Iterator
from dataclasses import dataclass
from datetime import datetime
from enum import StrEnum

from pydantic import BaseModel

from llm_triage.analyzers.ollama import decode_text
from llm_triage.timestamps import from_epoch_seconds

log = logging.getLogger(__name__)

BINARY_NAMES: tuple[str, ...] = ("llama-cli", "llama-server", "llama-run")
# Pre-rename llama.cpp builds shipped the CLI as plain ``main``.
LEGACY_BINARY = "main"


class Shell(StrEnum):
    BASH = "bash"
    ZSH = "zsh"
    POWERSHELL = "powershell"


class Recoverability(StrEnum):
    PROMPT_ON_DISK = "PromptOnDisk"
    PROMPT_FILE_REFERENCED = "PromptFileReferenced"
    MEMORY_ONLY = "MemoryOnly"
    NO_PROMPT = "NoPrompt"


class RunInvocation(BaseModel):
    binary: str
    model_path: str | None = None
    prompt: str | None = None
    prompt_file: str | None = None
    # Canonical names for the known generation flags, the flag itself for
    # anything else. Values are kept as written.
    params: dict[str, str] = {}
    interactive: bool = False
    raw_line: str
    source_path: str = ""
    line_no: int = 0
    timestamp: datetime | None = None
    # Unbalanced quoting; tokens are a best-effort guess.
    degraded: bool = False
    shell: Shell | None = None
    recoverability: Recoverability = Recoverability.NO_PROMPT


# flag -> (canonical name, takes a value)
_FLAGS: dict[str, tuple[str, bool]] = {
    "-m": ("model", True),
    "--model": ("model", True),
    "-p": ("prompt", True),
    "--prompt": ("prompt", True),
    "-f": ("file", True),
    "--file": ("file", True),
    "--temp": ("temp", True),
    "--temperature": ("temp", True),
    "--top-p": ("top_p", True),
    "--top_p": ("top_p", True),
    "-c": ("ctx_size", True),
    "--ctx-size": ("ctx_size", True),
    "-s": ("seed", True),
    "--seed": ("seed", True),
    "-n": ("n_predict", True),
    "--n-predict": ("n_predict", True),
    "--predict": ("n_predict", True),
    "-i": ("interactive", False),
    "--interactive": ("interactive", False),
    "--interactive-first": ("interactive", False),
}
_SEPARATORS = frozenset({";", "&&", "||", "|", "&", "|&", ";;"})
_REDIRECT_RE = re.compile(r"^\d*(?:>>?|<<?|&>>?|>&|<&)\d*$")
_NUMBER_RE = re.compile(r"^-\d*\.?\d+(?:[eE][-+]?\d+)?$")


# ---------------------------------------------------------------------------
# Tokenizing
# ---------------------------------------------------------------------------


def _lex(line: str, shell: Shell | None) -> list[str]:
    lexer = shlex.shlex(line, posix=True, punctuation_chars=True)
    lexer.whitespace_split = True
    lexer.commenters = ""
    if shell is Shell.POWERSHELL:
        lexer.escape = "`"
    return list(lexer)


def tokenize(line: str, shell: Shell | None = None) -> tuple[list[str], bool]:
    """Shell words of ``line`` with operators as separate tokens, plus a degraded flag.

    Single/double quotes and backslash escapes follow POSIX rules (backtick
    escapes for PowerShell). On unbalanced quoting the line is retried with
    the missing quote closed, then split on whitespace.
    """
    try:
        return _lex(line, shell), False
    except ValueError:
        pass
    for closer in ('"', "'"):
        try:
            return _lex(line + closer, shell), True
        except ValueError:
            continue
    log.debug("unparseable quoting, whitespace split: %r", line)
    return line.split(), True


def _segments(tokens: list[str]) -> Iterator[list[str]]:
    current: list[str] = []
    for token in tokens:
        if token in _SEPARATORS:
            if current:
                yield current
            current = []
        else:
            current.append(token)
    if current:
        yield current


def _basename(token: str) -> str:
    name = re.split(r"[\\/]", token)[-1]
    lower = name.casefold()
    return name[:-4] if lower.endswith(".exe") else name


def _binary_index(segment: list[str]) -> int | None:
    """Position of the llama.cpp executable within one command segment."""
    for i, token in enumerate(segment):
        name = _basename(token)
        if any(name == b or name.endswith(b) for b in BINARY_NAMES):
            return i
        if name == LEGACY_BINARY and (i == 0 or token != name):
            # ``main`` alone is too common a word; require it to be the
            # command itself or to carry a path (./main, build/bin/main)
            return i
    return None


def _is_value(token: str) -> bool:
    return not token.startswith("-") or bool(_NUMBER_RE.match(token))


# ---------------------------------------------------------------------------
# Invocations
# ---------------------------------------------------------------------------


def assess_recoverability(inv: RunInvocation) -> Recoverability:
    if inv.prompt is not None:
        return Recoverability.PROMPT_ON_DISK
    if inv.prompt_file is not None:
        return Recoverability.PROMPT_FILE_REFERENCED
    if inv.interactive:
        return Recoverability.MEMORY_ONLY
    return Recoverability.NO_PROMPT


def _from_segment(
    segment: list[str], start: int, line: str, degraded: bool
) -> RunInvocation:
    binary = segment[start]
    model_path = prompt = prompt_file = None
    params: dict[str, str] = {}
    interactive = False
    args = segment[start + 1 :]
    i = 0
    while i < len(args):
        token = args[i]
        i += 1
        if _REDIRECT_RE.match(token):
            i += 1  # redirection target
            continue
        if not token.startswith("-") or token in ("-", "--"):
            continue
        flag, eq, inline = token.partition("=")
        value: str | None = inline if eq else None
        known = _FLAGS.get(flag)
        if known is None:
            # unknown flag: take the next word as its value when it is not a flag
            if (
                value is None
                and i < len(args)
                and _is_value(args[i])
                and not _REDIRECT_RE.match(args[i])
            ):
                value = args[i]
                i += 1
            params[flag] = value if value is not None else ""
            continue
        name, takes_value = known
        if not takes_value:
            interactive = True
            continue
        if value is None:
            if i >= len(args):
                continue
            value = args[i]
            i += 1
        if name == "model":
            model_path = value
        elif name == "prompt":
            prompt = value
        elif name == "file":
            prompt_file = value
        else:
            params[name] = value
    inv = RunInvocation(
        binary=binary,
        model_path=model_path,
        prompt=prompt,
        prompt_file=prompt_file,
        params=params,
        interactive=interactive,
        raw_line=line,
        degraded=degraded,
    )
    inv.recoverability = assess_recoverability(inv)
    return inv


def parse_invocations(line: str, shell: Shell | None = None) -> list[RunInvocation]:
    """Every llama.cpp invocation on one command line (``a && b`` yields two)."""
    tokens, degraded = tokenize(line, shell)
    out = []
    for segment in _segments(tokens):
        start = _binary_index(segment)
        if start is not None:
            out.append(_from_segment(segment, start, line, degraded))
    return out


def parse_invocation(line: str, shell: Shell | None = None) -> RunInvocation:
    """The first llama.cpp invocation on ``line``; ``ValueError`` if there is none."""
    found = parse_invocations(line, shell)
    if not found:
        raise ValueError(f"no llama.cpp binary in {line!r}")
    return found[0]


# ---------------------------------------------------------------------------
# History files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Command:
    text: str
    line_no: int
    timestamp: datetime | None


_ZSH_EXTENDED_RE = re.compile(r"^: (\d+):\d+;(.*)$", re.DOTALL)
_BASH_STAMP_RE = re.compile(r"^#(\d{9,11})$")


def _zsh_commands(lines: list[str]) -> Iterator[_Command]:
    i = 0
    while i < len(lines):
        line_no = i + 1
        line = lines[i]
        i += 1
        m = _ZSH_EXTENDED_RE.match(line)
        timestamp = None
        if m:
            timestamp = from_epoch_seconds(int(m.group(1)))
            line = m.group(2)
        # multi-line commands are stored with a trailing backslash
        while line.endswith("\\") and i < len(lines):
            line = line[:-1] + "\n" + lines[i]
            i += 1
        if line:
            yield _Command(line, line_no, timestamp)


def _bash_commands(lines: list[str]) -> Iterator[_Command]:
    pending: datetime | None = None
    for line_no, line in enumerate(lines, start=1):
        m = _BASH_STAMP_RE.match(line)
        if m:
            pending = from_epoch_seconds(int(m.group(1)))
            continue
        if line:
            yield _Command(line, line_no, pending)
        pending = None


def _powershell_commands(lines: list[str]) -> Iterator[_Command]:
    i = 0
    while i < len(lines):
        line_no = i + 1
        line = lines[i]
        i += 1
        while line.endswith("`") and i < len(lines):
            line = line[:-1] + "\n" + lines[i]
            i += 1
        if line:
            yield _Command(line, line_no, None)


_READERS = {
    Shell.BASH: _bash_commands,
    Shell.ZSH: _zsh_commands,
    Shell.POWERSHELL: _powershell_commands,
}


def parse_shell_history(
    data: bytes,
    shell: Shell,
    source_path: str = "",
    *,
    warnings: list[str] | None = None,
) -> list[RunInvocation]:
    """llama.cpp invocations in a bash, zsh or PowerShell history file, in file order.

    zsh extended-history entries and bash ``#<epoch>`` comment lines date
    the command that follows; anything else is undated.
    """
    text = decode_text(data, source_path, warnings)
    lines = [line.removesuffix("\r") for line in text.split("\n")]
    invocations: list[RunInvocation] = []
    for command in _READERS[shell](lines):
        for inv in parse_invocations(command.text, shell):
            invocations.append(
                inv.model_copy(
                    update={
                        "source_path": source_path,
                        "line_no": command.line_no,
                        "timestamp": command.timestamp,
                        "shell": shell,
                    }
                )
            )
    log.debug("%s: %d llama.cpp invocation(s)", source_path, len(invocations))
    return invocations
