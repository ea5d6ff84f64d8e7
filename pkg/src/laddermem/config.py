"""Structured config loading with strict key checking.

Configs are TOML. Physical quantities carry their unit in the key name
(``temperature_k``, ``pulse_fwhm_ns``, ...). Unknown keys are rejected.
"""
from __future__ import annotations

import hashlib
import json
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Bad or incomplete configuration. ``key`` names the offending entry."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


def load_toml(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        # message already carries "(at line N, column M)"
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def load_constants(path: str | Path | None = None) -> dict[str, Any]:
    """Atomic constants; the shipped cesium file unless *path* is given."""
    if path is not None:
        return load_toml(path)
    ref = resources.files("laddermem") / "data" / "cesium.toml"
    with ref.open("rb") as fh:
        return tomllib.load(fh)


def check_section(
    section: Mapping[str, Any],
    where: str,
    required: Iterable[str] = (),
    optional: Iterable[str] = (),
) -> None:
    """Raise ConfigError for missing required keys or unknown keys."""
    required = list(required)
    allowed = set(required) | set(optional)
    for key in required:
        if key not in section:
            raise ConfigError(f"missing required key '{where}.{key}'", key=f"{where}.{key}")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key '{where}.{key}'", key=f"{where}.{key}")


def get_section(cfg: Mapping[str, Any], name: str, required: bool = True) -> dict[str, Any]:
    if name not in cfg:
        if required:
            raise ConfigError(f"missing required section '[{name}]'", key=name)
        return {}
    sec = cfg[name]
    if not isinstance(sec, dict):
        raise ConfigError(f"'{name}' must be a table", key=name)
    return dict(sec)


def config_hash(cfg: Mapping[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a resolved config."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()
