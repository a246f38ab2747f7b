"""Recover allowlisted environment assignments from the subject system.

Sources, per OS profile:

* shell profiles in every home (``.bashrc``, ``.zshrc``, ``.profile``)
* PowerShell profiles under ``Documents/WindowsPowerShell`` and ``Documents/PowerShell``
* the Ollama systemd unit and its ``ollama.service.d/*.conf`` drop-ins

The bindings feed :func:`llm_triage.catalog.resolve_paths` as overrides.
"""

from __future__ import annotations

import logging
import re
import shlex
from collections.abc import Sequence
from pathlib import Path

from llm_triage.analyzers.ollama import parse_service_unit
from llm_triage.catalog import ENV_ALLOWLIST, EnvBinding, OsProfile, host_path

log = logging.getLogger(__name__)

SHELL_PROFILES = (".bashrc", ".zshrc", ".profile", ".bash_profile")
POWERSHELL_DIRS = ("Documents/WindowsPowerShell", "Documents/PowerShell")
POWERSHELL_PROFILES = ("Microsoft.PowerShell_profile.ps1", "profile.ps1")
SERVICE_UNIT = "/etc/systemd/system/ollama.service"
SERVICE_DROPINS = "/etc/systemd/system/ollama.service.d"

_PS_ENV_RE = re.compile(
    r"""^\s*\$env:(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*=\s*"""
    r"""(?P<q>["']?)(?P<value>.*?)(?P=q)\s*(?:;|$)""",
    re.IGNORECASE,
)
_PS_SETENV_RE = re.compile(
    r"""\[(?:System\.)?Environment\]::SetEnvironmentVariable\(\s*["'](?P<name>[^"']+)["']\s*,"""
    r"""\s*["'](?P<value>[^"']*)["']""",
    re.IGNORECASE,
)


def parse_shell_profile(data: bytes, *, source: str = "") -> list[EnvBinding]:
    """``export NAME=value`` / ``NAME=value`` assignments from a POSIX shell rc file."""
    text = data.decode("utf-8", errors="replace")
    bindings: list[EnvBinding] = []
    for line in text.splitlines():
        try:
            tokens = shlex.split(line, comments=True)
        except ValueError:
            continue
        if tokens[:1] == ["export"]:
            tokens = tokens[1:]
        elif tokens[:2] == ["declare", "-x"]:
            tokens = tokens[2:]
        for token in tokens:
            name, sep, value = token.partition("=")
            if not sep:
                # ``export`` of a bare name, or a command; either way nothing assigned
                break
            if name in ENV_ALLOWLIST:
                bindings.append(
                    EnvBinding(name=name, value=value, source=source, source_kind="shell-profile")
                )
    return bindings


def parse_powershell_profile(data: bytes, *, source: str = "") -> list[EnvBinding]:
    text = data.decode("utf-8-sig", errors="replace")
    bindings: list[EnvBinding] = []
    for line in text.splitlines():
        m = _PS_ENV_RE.match(line) or _PS_SETENV_RE.search(line)
        if not m:
            continue
        name = next((n for n in ENV_ALLOWLIST if n.casefold() == m.group("name").casefold()), None)
        if name is not None:
            bindings.append(
                EnvBinding(
                    name=name, value=m.group("value"), source=source,
                    source_kind="powershell-profile",
                )
            )
    return bindings


def _read(path: Path) -> bytes | None:
    if not path.is_file() or path.is_symlink():
        return None
    try:
        return path.read_bytes()
    except OSError as exc:
        log.warning("cannot read %s: %s", path, exc)
        return None


def harvest_env_overrides(
    root: Path,
    homes: Sequence[str],
    os_profile: OsProfile,
    *,
    warnings: list[str] | None = None,
) -> list[EnvBinding]:
    """All allowlisted bindings found under ``root``, in a stable order.

    ``homes`` are image paths (``/home/alice``); ``source`` on each binding is
    the image path of the file it came from.
    """
    ci = os_profile is OsProfile.WINDOWS
    bindings: list[EnvBinding] = []

    for home in homes:
        if os_profile is not OsProfile.WINDOWS:
            for name in SHELL_PROFILES:
                image = f"{home.rstrip('/')}/{name}"
                data = _read(host_path(root, image, case_insensitive=ci))
                if data is not None:
                    bindings.extend(parse_shell_profile(data, source=image))
        if os_profile is not OsProfile.LINUX:
            for directory in POWERSHELL_DIRS:
                for name in POWERSHELL_PROFILES:
                    image = f"{home.rstrip('/')}/{directory}/{name}"
                    data = _read(host_path(root, image, case_insensitive=ci))
                    if data is not None:
                        bindings.extend(parse_powershell_profile(data, source=image))

    if os_profile is not OsProfile.WINDOWS:
        data = _read(host_path(root, SERVICE_UNIT))
        if data is not None:
            bindings.extend(parse_service_unit(data, source=SERVICE_UNIT))
        dropins = host_path(root, SERVICE_DROPINS)
        if dropins.is_dir():
            for conf in sorted(dropins.glob("*.conf")):
                data = _read(conf)
                if data is None:
                    continue
                image = f"{SERVICE_DROPINS}/{conf.name}"
                bindings.extend(
                    parse_service_unit(data, source=image, source_kind="service-dropin")
                )

    for binding in bindings:
        log.info("env override %s=%s from %s", binding.name, binding.value, binding.source)
        if warnings is not None and not binding.value:
            warnings.append(f"{binding.source}: {binding.name} is assigned an empty value")
    return bindings
