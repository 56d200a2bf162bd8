"""``key = value`` text encoding for flat dataclass configs."""

from __future__ import annotations

import dataclasses
import typing


class ConfigError(ValueError):
    """Bad configuration text: unknown key, unparsable value, failed validation."""


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(_format(v) for v in value)
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_scalar(tp, text: str, key: str):
    text = text.strip()
    if tp is bool:
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    try:
        return tp(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {tp.__name__}, got {text!r}") from None


def parse_value(tp, text: str, key: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        inner = [a for a in args if a is not type(None)]
        if not text.strip():
            return None
        return parse_value(inner[0], text, key)
    if origin in (tuple, list):
        item = args[0]
        parts = [p for p in text.split(",") if p.strip()]
        return tuple(_parse_scalar(item, p, key) for p in parts)
    return _parse_scalar(tp, text, key)


def to_lines(obj) -> list:
    return [f"{f.name} = {_format(getattr(obj, f.name))}" for f in dataclasses.fields(obj)]


def to_text(obj) -> str:
    return "\n".join(to_lines(obj)) + "\n"


def parse_pairs(text: str, source: str = "<config>") -> dict:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in pairs:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def build(cls, pairs: dict, strict: bool = True):
    """Instantiate dataclass ``cls`` from string pairs; unknown keys raise when ``strict``."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(pairs) - names)
    if strict and unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    kwargs = {k: parse_value(hints[k], v, k) for k, v in pairs.items() if k in names}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def diff(a, b) -> list:
    """Names of fields whose values differ between two configs of the same class."""
    return [f.name for f in dataclasses.fields(a) if getattr(a, f.name) != getattr(b, f.name)]
