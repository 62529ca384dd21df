"""Strict flat key = value config files.

One assignment per line, ``#`` comments, lists in brackets, optional
``[section]`` headers for experiment parameters. Keys outside any section
must be SystemConfig or PowerLimits fields; unknown keys are rejected with
their line number. CLI overrides use the same syntax (``key=value`` or
``section.key=value``).
"""

import dataclasses

from .errors import ConfigError
from .scenario import PowerLimits, SystemConfig

__all__ = [
    "parse_config_text",
    "parse_config_file",
    "apply_overrides",
    "config_echo",
]

_CFG_FIELDS = {f.name: f for f in dataclasses.fields(SystemConfig)}
_LIMIT_FIELDS = {f.name: f for f in dataclasses.fields(PowerLimits)}


def _parse_scalar(text, line):
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ConfigError(f"malformed list {text!r}", line=line)
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(tok, line) for tok in inner.split(",")]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _coerce(field, value, key, line):
    kind = field.type
    if kind in ("int", int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"key {key!r} expects an integer, got {value!r}",
                              line=line)
        return value
    if kind in ("float", float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"key {key!r} expects a number, got {value!r}",
                              line=line)
        return float(value)
    if kind in ("tuple", tuple):
        if not isinstance(value, list) or not all(
                isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"key {key!r} expects an integer list, got {value!r}",
                              line=line)
        return tuple(value)
    return value


def parse_config_text(text, source="<config>"):
    """Parse config text into (SystemConfig, PowerLimits, sections dict)."""
    cfg_kw, lim_kw = {}, {}
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if not current:
                raise ConfigError("empty section name", line=lineno)
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}",
                              line=lineno)
        key, _, val = line.partition("=")
        key = key.strip()
        value = _parse_scalar(val, lineno)
        if current is not None:
            sections[current][key] = value
        elif key in _CFG_FIELDS:
            cfg_kw[key] = _coerce(_CFG_FIELDS[key], value, key, lineno)
        elif key in _LIMIT_FIELDS:
            lim_kw[key] = _coerce(_LIMIT_FIELDS[key], value, key, lineno)
        else:
            raise ConfigError(f"unknown key {key!r} in {source}", line=lineno)
    return SystemConfig(**cfg_kw), PowerLimits(**lim_kw), sections


def parse_config_file(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}")
    return parse_config_text(text, source=str(path))


def apply_overrides(cfg, limits, sections, overrides):
    """Apply 'key=value' / 'section.key=value' pairs on top of parsed values."""
    cfg_kw, lim_kw = {}, {}
    for i, item in enumerate(overrides or (), start=1):
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value", line=i)
        key, _, val = item.partition("=")
        key = key.strip()
        value = _parse_scalar(val, i)
        if "." in key:
            section, _, sub = key.partition(".")
            sections.setdefault(section, {})[sub] = value
        elif key in _CFG_FIELDS:
            cfg_kw[key] = _coerce(_CFG_FIELDS[key], value, key, i)
        elif key in _LIMIT_FIELDS:
            lim_kw[key] = _coerce(_LIMIT_FIELDS[key], value, key, i)
        else:
            raise ConfigError(f"unknown override key {key!r}", line=i)
    if cfg_kw:
        cfg = cfg.with_overrides(**cfg_kw)
    if lim_kw:
        limits = dataclasses.replace(limits, **lim_kw)
    return cfg, limits, sections


def config_echo(cfg, limits):
    """All effective values as a flat dict (for manifests)."""
    out = {}
    for f in dataclasses.fields(SystemConfig):
        v = getattr(cfg, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    for f in dataclasses.fields(PowerLimits):
        out[f.name] = getattr(limits, f.name)
    return out
