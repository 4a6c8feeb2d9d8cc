"""Flat key = value config files.

One key per line, '#' starts a comment, booleans are true/false. Every key
must be a StreamConfig field; unknown keys are errors so typos cannot
silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import asdict, fields
from pathlib import Path

from .harness import StreamConfig

_FIELD_TYPES = {f.name: f.type for f in fields(StreamConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    if kind == "bool":
        lowered = raw.lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"config key {key!r}: cannot parse {raw!r} as a boolean")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_config_text(text: str) -> StreamConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    config = StreamConfig(**values)
    config.validate()
    return config


def load_config(path) -> StreamConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def config_to_text(config: StreamConfig) -> str:
    lines = [f"{key} = {value}" for key, value in asdict(config).items()]
    return "\n".join(lines) + "\n"


def save_config(path, config: StreamConfig) -> None:
    Path(path).write_text(config_to_text(config), encoding="utf-8")
