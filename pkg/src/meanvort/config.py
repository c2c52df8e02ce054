"""Flat ``section.key = value`` run configuration.

A configuration file is a list of assignments, one per line; ``#`` starts a
comment line.  Every key has a type and a default, unknown keys are
rejected, and :func:`dump_config` writes the canonical form (all keys, fixed
order, canonical number formatting) that :func:`parse_config_text` reads
back unchanged.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .degenerate import Interpolation
from .evolution import Limiter, ZetaScheme
from .fields import Regime
from .presets import FORCING_PRESETS, INITIAL_PRESETS, PINNING_PRESETS


class ConfigError(Exception):
    """Base class for configuration problems (exit status 2)."""


class ParseError(ConfigError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ValidationError(ConfigError):
    def __init__(self, key: str, reason: str):
        super().__init__(f"{key}: {reason}")
        self.key = key
        self.reason = reason


# --------------------------------------------------------------------------
# value types


def _float(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("nan is not allowed")
    return value


def _int(text: str) -> int:
    return int(text, 10)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _choice(options) -> Callable[[str], str]:
    def conv(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return conv


def _float_list(text: str) -> tuple[float, ...]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(_float(s) for s in items)


def _float_or_auto(text: str):
    return "auto" if text == "auto" else _float(text)


def _string(text: str) -> str:
    return text


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


@dataclass(frozen=True)
class Key:
    name: str
    convert: Callable[[str], Any]
    default: Any
    doc: str = ""


_ENUM = lambda e: _choice(tuple(m.value for m in e))  # noqa: E731

SCHEMA: tuple[Key, ...] = (
    Key("seed", _int, 0, "seed for randomized presets"),
    Key("grid.n", _int, 128, "cells per axis (power of two, >= 8)"),
    Key("grid.l", _float, 8.0, "box side"),
    Key("params.alpha", _float, 1.0),
    Key("params.beta", _float, 0.0),
    Key("params.lambda", _float, 0.0),
    Key("params.regime", _ENUM(Regime), "incompressible"),
    Key("pinning.preset", _choice(PINNING_PRESETS), "none"),
    Key("pinning.amplitude", _float, 0.0),
    Key("pinning.path", _string, ""),
    Key("forcing.preset", _choice(FORCING_PRESETS), "none"),
    Key("forcing.amplitude", _float, 0.0),
    Key("forcing.path", _string, ""),
    Key("initial.preset", _choice(INITIAL_PRESETS), "gaussian"),
    Key("initial.c", _float, 1.0),
    Key("initial.radius", _float, 0.5),
    Key("initial.sigma", _float, 0.5),
    Key("initial.center_x", _float, 0.5, "fraction of the box side"),
    Key("initial.center_y", _float, 0.5, "fraction of the box side"),
    Key("initial.normalize", _bool, False),
    Key("initial.zeta_amplitude", _float, 0.0),
    Key("time.T", _float, 1.0),
    Key("time.cfl", _float, 0.4),
    Key("time.dt_max", _float, math.inf),
    Key("time.snapshot_stride", _int, 10),
    Key("solver.tol", _float, 1e-10),
    Key("solver.max_iter", _int, 0, "0 means 10 * n"),
    Key("solver.limiter", _ENUM(Limiter), "vanleer"),
    Key("solver.zeta_scheme", _ENUM(ZetaScheme), "imex"),
    Key("solver.lp", _float, 2.0),
    Key("outputs.dir", _string, "meanvort_out"),
    Key("outputs.emit_snapshots", _bool, True),
    Key("outputs.emit_csv", _bool, True),
    Key("outputs.emit_plotdata", _bool, True),
    Key("degenerate.times", _float_list, (0.5,)),
    Key("degenerate.ds", _float, 0.0, "0 picks the step automatically"),
    Key("degenerate.interpolation", _ENUM(Interpolation), "bicubic"),
    Key("degenerate.scenario", _choice(("field", "constant_f")), "field"),
    Key("degenerate.f0", _float, 1.0),
    Key("degenerate.g0", _float, 0.0),
    Key("degenerate.background", _float_or_auto, "auto"),
)
KEYS = {k.name: k for k in SCHEMA}


class RunConfig:
    """Validated configuration; values are read with ``cfg["section.key"]``."""

    def __init__(self, values: dict[str, Any], base_dir: Path | None = None):
        self._values = dict(values)
        self.base_dir = base_dir or Path.cwd()

    def __getitem__(self, key: str):
        return self._values[key]

    def items(self):
        return ((k.name, self._values[k.name]) for k in SCHEMA)

    def replace(self, **changes) -> "RunConfig":
        values = dict(self._values)
        values.update(changes)
        return RunConfig(values, self.base_dir)

    def resolve_path(self, text: str) -> Path:
        p = Path(text)
        return p if p.is_absolute() else self.base_dir / p

    def output_dir(self) -> Path:
        env = os.environ.get("MEANVORT_OUT")
        return Path(env) if env else self.resolve_path(self["outputs.dir"])

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self._values == other._values


def dump_config(cfg: RunConfig) -> str:
    """Canonical text form; ``parse_config_text(dump_config(c))`` equals ``c``."""
    return "".join(f"{name} = {_fmt(value)}\n" for name, value in cfg.items())


def parse_config_text(text: str, base_dir: Path | None = None, check_paths: bool = True) -> RunConfig:
    """Parse and validate configuration text.

    Raises
    ------
    ParseError
        Malformed line or value (with line and column).
    ValidationError
        Unknown key, duplicate key or inconsistent values.
    """
    values = {k.name: k.default for k in SCHEMA}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in raw:
            col = len(raw) - len(raw.lstrip()) + 1
            raise ParseError("expected 'section.key = value'", lineno, col)
        eq = raw.index("=")
        key = raw[:eq].strip()
        value_text = raw[eq + 1 :].strip()
        key_col = len(raw[:eq]) - len(raw[:eq].lstrip()) + 1
        if not key:
            raise ParseError("missing key before '='", lineno, eq + 1)
        if any(ch.isspace() for ch in key):
            raise ParseError(f"malformed key {key!r}", lineno, key_col)
        if key not in KEYS:
            raise ValidationError(key, "unknown key")
        if key in seen:
            raise ValidationError(key, "key given twice")
        seen.add(key)
        value_col = eq + 2 + (len(raw[eq + 1 :]) - len(raw[eq + 1 :].lstrip()))
        if value_text == "":
            if KEYS[key].convert is _string:
                values[key] = ""
                continue
            raise ParseError(f"missing value for {key}", lineno, value_col)
        try:
            values[key] = KEYS[key].convert(value_text)
        except ValueError as exc:
            raise ParseError(f"bad value for {key}: {exc}", lineno, value_col) from None
    cfg = RunConfig(values, base_dir)
    validate(cfg, check_paths=check_paths)
    return cfg


def parse_config(path, check_paths: bool = True) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    return parse_config_text(text, base_dir=path.parent.resolve(), check_paths=check_paths)


def default_config() -> RunConfig:
    return RunConfig({k.name: k.default for k in SCHEMA})


def validate(cfg: RunConfig, check_paths: bool = True) -> None:
    def need(cond, key, reason):
        if not cond:
            raise ValidationError(key, reason)

    n = cfg["grid.n"]
    need(n >= 8 and n & (n - 1) == 0, "grid.n", "must be a power of two >= 8")
    need(cfg["grid.l"] > 0 and math.isfinite(cfg["grid.l"]), "grid.l", "must be positive")
    need(cfg["params.lambda"] >= 0, "params.lambda", "must be nonnegative")
    need(math.isfinite(cfg["params.alpha"]), "params.alpha", "must be finite")
    need(math.isfinite(cfg["params.beta"]), "params.beta", "must be finite")
    if cfg["params.regime"] == Regime.DEGENERATE_PARABOLIC.value:
        need(cfg["params.beta"] == 0, "params.beta", "must be 0 in the degenerate_parabolic regime")
        need(cfg["params.lambda"] == 0, "params.lambda", "must be 0 in the degenerate_parabolic regime")
        need(cfg["params.alpha"] > 0, "params.alpha", "must be positive in the degenerate_parabolic regime")
    need(cfg["time.T"] >= 0 and math.isfinite(cfg["time.T"]), "time.T", "must be a finite number >= 0")
    need(0 < cfg["time.cfl"] <= 0.9, "time.cfl", "must lie in (0, 0.9]")
    need(cfg["time.dt_max"] > 0, "time.dt_max", "must be positive")
    need(cfg["time.snapshot_stride"] >= 1, "time.snapshot_stride", "must be at least 1")
    need(0 < cfg["solver.tol"] < 1, "solver.tol", "must lie in (0, 1)")
    need(cfg["solver.max_iter"] >= 0, "solver.max_iter", "must be nonnegative")
    need(cfg["solver.lp"] >= 1, "solver.lp", "must be at least 1")
    need(cfg["initial.c"] >= 0, "initial.c", "must be nonnegative")
    need(cfg["initial.sigma"] > 0, "initial.sigma", "must be positive")
    need(cfg["initial.radius"] > 0, "initial.radius", "must be positive")
    if cfg["initial.preset"] in ("uniform_patch", "mollified_ring"):
        need(
            cfg["initial.radius"] < 0.25 * cfg["grid.l"],
            "initial.radius",
            "must be below l/4",
        )
    need(all(t >= 0 for t in cfg["degenerate.times"]), "degenerate.times", "must be nonnegative")
    need(cfg["degenerate.ds"] >= 0, "degenerate.ds", "must be nonnegative")
    need(cfg["degenerate.f0"] >= 0, "degenerate.f0", "must be nonnegative")
    need(str(cfg["outputs.dir"]) != "", "outputs.dir", "must not be empty")
    for section in ("pinning", "forcing"):
        if cfg[f"{section}.preset"] == "file":
            need(cfg[f"{section}.path"] != "", f"{section}.path", "required when preset = file")
            if check_paths:
                need(
                    cfg.resolve_path(cfg[f"{section}.path"]).is_file(),
                    f"{section}.path",
                    "file does not exist",
                )
