"""Plain-text ``key=value`` experiment configs.

One setting per line, ``#`` starts a comment. Unknown keys are errors.
Command-line flags override file values; the merged result is written back
as a snapshot that reproduces the run on its own.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .errors import FanoiseLabError


class ConfigError(FanoiseLabError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def parse_bool(text: str) -> bool:
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def float_list(text: str) -> list[float]:
    return [float(t) for t in str(text).split(",") if t.strip()]


def int_list(text: str) -> list[int]:
    return [int(t) for t in str(text).split(",") if t.strip()]


def str_list(text: str) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()]


@dataclass(frozen=True)
class Key:
    name: str
    parse: Callable[[str], Any]
    default: Any
    help: str = ""
    render: Callable[[Any], str] | None = None

    def to_text(self, value) -> str:
        if value is None:
            return ""
        if self.render is not None:
            return self.render(value)
        if isinstance(value, bool):
            return "1" if value else "0"
        if isinstance(value, float):
            return repr(value)
        if isinstance(value, (list, tuple)):
            return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        return str(value)


def optional(parse):
    def inner(text):
        return None if str(text).strip() == "" else parse(text)

    return inner


def read_config_file(path, schema: dict[str, Key]) -> dict[str, Any]:
    values: dict[str, Any] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {raw!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in schema:
            raise ConfigError(f"unknown key {key!r}", lineno)
        try:
            values[key] = schema[key].parse(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno) from None
    return values


def resolve(schema: dict[str, Key], file_values: dict, flag_values: dict) -> dict[str, Any]:
    out = {name: key.default for name, key in schema.items()}
    out.update(file_values)
    for name, value in flag_values.items():
        if name not in schema:
            raise ConfigError(f"unknown key {name!r}")
        if value is not None:
            out[name] = value
    return out


def write_snapshot(path, schema: dict[str, Key], values: dict) -> None:
    lines = [f"{name}={schema[name].to_text(values[name])}" for name in schema]
    Path(path).write_text("\n".join(lines) + "\n")
