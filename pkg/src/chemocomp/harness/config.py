"""Flat ``section.key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Every key belongs to one of the
sections ``model``, ``grid``, ``step``, ``moments``, ``initial``, ``run`` or
``sweep``; unknown keys are errors so typos surface early.  Sweep keys take a
comma-separated list, e.g. ``sweep.model.chi1 = 1, 2, 3``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from ..dynamics import StepControl
from ..functionals import MomentConfig, Regime
from ..grid import RadialGrid
from ..model import ModelParams

__all__ = ["ConfigError", "GridConfig", "InitialConfig", "RunConfig", "parse_text", "load", "sweep_points"]

INITIAL_KINDS = ("zero", "constant", "bump", "concentrated", "file")

_INITIAL_KEYS = {
    "zero": set(),
    "constant": {"u", "v"},
    "bump": {"amplitude", "width", "base", "split"},
    "concentrated": {"M0", "M0_tilde", "r_star", "L", "split"},
    "file": {"path"},
}


class ConfigError(ValueError):
    """Malformed or invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        self.message = message
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class GridConfig:
    m: int = 400
    kind: str = "uniform"
    ratio: float = 1.02

    def build(self, n: int, R: float) -> RadialGrid:
        if self.kind == "uniform":
            return RadialGrid.uniform(n, R, self.m)
        return RadialGrid.geometric(n, R, self.m, self.ratio)


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "bump"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams = field(default_factory=ModelParams)
    grid: GridConfig = field(default_factory=GridConfig)
    step: StepControl = field(default_factory=StepControl)
    moments: Optional[MomentConfig] = None
    initial: InitialConfig = field(default_factory=InitialConfig)
    stride: int = 1
    fit_k: int = 10
    lp: tuple = (2.0, 2.0)
    seed: int = 0
    store_profiles: bool = False
    sweep: dict = field(default_factory=dict)
    base_dir: str = "."

    def canonical(self) -> dict:
        """Plain-data view used for hashing and for the run record."""
        return {
            "model": self.model.as_dict(),
            "grid": {"m": self.grid.m, "kind": self.grid.kind, "ratio": self.grid.ratio},
            "step": self.step.as_dict(),
            "moments": self.moments.as_dict() if self.moments is not None else None,
            "initial": {"kind": self.initial.kind, **{k: self.initial.params[k] for k in sorted(self.initial.params)}},
            "run": {
                "stride": self.stride,
                "fit_k": self.fit_k,
                "lp_p": self.lp[0],
                "lp_q": self.lp[1],
                "seed": self.seed,
                "store_profiles": self.store_profiles,
            },
        }

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def build_grid(self) -> RadialGrid:
        return self.grid.build(self.model.n, self.model.R)


def _number(text: str, key: str, line: Optional[int]) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}", line, key) from None
    if math.isnan(value):
        raise ConfigError("NaN is not allowed", line, key)
    return value


def _integer(text: str, key: str, line: Optional[int]) -> int:
    value = _number(text, key, line)
    if value != int(value):
        raise ConfigError(f"expected an integer, got {text!r}", line, key)
    return int(value)


def _boolean(text: str, key: str, line: Optional[int]) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}", line, key)


def _read_pairs(text: str) -> list[tuple[int, str, str]]:
    pairs = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("expected 'section.key = value'", lineno)
        key, value = (part.strip() for part in body.split("=", 1))
        if not key or "." not in key:
            raise ConfigError("keys must be dotted, e.g. model.chi1", lineno, key or None)
        if key in seen:
            raise ConfigError(f"duplicate key (first set on line {seen[key]})", lineno, key)
        seen[key] = lineno
        pairs.append((lineno, key, value))
    return pairs


_MODEL_FIELDS = {f.name: f.type for f in fields(ModelParams)}
_STEP_FIELDS = {f.name for f in fields(StepControl)}


def _apply(values: dict, key: str, value: str, line: Optional[int]) -> None:
    """Convert one raw value and store it under its section in ``values``."""
    section, _, name = key.partition(".")
    if section == "model":
        if name not in _MODEL_FIELDS:
            raise ConfigError("unknown model parameter", line, key)
        if name == "h_kind":
            if value not in ("ks", "jl"):
                raise ConfigError("h_kind must be 'ks' or 'jl'", line, key)
            values["model"][name] = value
        elif name == "n":
            values["model"][name] = _integer(value, key, line)
        else:
            values["model"][name] = _number(value, key, line)
    elif section == "grid":
        if name == "m":
            values["grid"]["m"] = _integer(value, key, line)
        elif name == "kind":
            if value not in ("uniform", "geometric"):
                raise ConfigError("grid.kind must be 'uniform' or 'geometric'", line, key)
            values["grid"]["kind"] = value
        elif name == "ratio":
            values["grid"]["ratio"] = _number(value, key, line)
        else:
            raise ConfigError("unknown grid key", line, key)
    elif section == "step":
        if name not in _STEP_FIELDS:
            raise ConfigError("unknown step key", line, key)
        values["step"][name] = _integer(value, key, line) if name == "max_steps" else _number(value, key, line)
    elif section == "moments":
        if name == "regime":
            if value not in ("ks", "jl"):
                raise ConfigError("moments.regime must be 'ks' or 'jl'", line, key)
            values["moments"][name] = value
        elif name in ("s0", "b", "eps"):
            values["moments"][name] = _number(value, key, line)
        else:
            raise ConfigError("unknown moments key", line, key)
    elif section == "initial":
        if name == "kind":
            if value not in INITIAL_KINDS:
                raise ConfigError(f"initial.kind must be one of {', '.join(INITIAL_KINDS)}", line, key)
            values["initial"]["kind"] = value
        elif name == "path":
            values["initial"]["path"] = value
        else:
            values["initial"][name] = _number(value, key, line)
    elif section == "run":
        if name in ("stride", "fit_k", "seed"):
            values["run"][name] = _integer(value, key, line)
        elif name in ("lp_p", "lp_q"):
            values["run"][name] = _number(value, key, line)
        elif name == "store_profiles":
            values["run"][name] = _boolean(value, key, line)
        else:
            raise ConfigError("unknown run key", line, key)
    else:
        raise ConfigError(f"unknown section '{section}'", line, key)


def _build(values: dict, sweep: dict, base_dir: str, lines: dict) -> RunConfig:
    def fail(exc: Exception, section: str) -> ConfigError:
        # point at the first line of the offending section when the error names a field
        msg = str(exc)
        for key, line in lines.items():
            if key.startswith(section + ".") and key.split(".", 1)[1] in msg:
                return ConfigError(msg, line, key)
        return ConfigError(f"{section}: {msg}")

    try:
        model = ModelParams(**values["model"])
    except (ValueError, TypeError) as exc:
        raise fail(exc, "model") from None
    try:
        grid = GridConfig(**values["grid"])
        if grid.m < 1:
            raise ValueError("m must be >= 1")
        if grid.kind == "geometric" and not grid.ratio > 0:
            raise ValueError("ratio must be positive")
    except ValueError as exc:
        raise fail(exc, "grid") from None
    try:
        step = StepControl(**values["step"])
    except ValueError as exc:
        raise fail(exc, "step") from None
    moments = None
    if values["moments"]:
        mv = dict(values["moments"])
        if "s0" not in mv or "b" not in mv:
            raise ConfigError("moments section needs both moments.s0 and moments.b", lines.get("moments.s0") or lines.get("moments.b"))
        mv["regime"] = Regime(mv.get("regime", "jl" if model.is_jl else "ks"))
        try:
            moments = MomentConfig(**mv)
            moments.validate(model.n, model.R)
        except ValueError as exc:
            raise fail(exc, "moments") from None

    init = dict(values["initial"])
    kind = init.pop("kind", "bump")
    extra = set(init) - _INITIAL_KEYS[kind]
    if extra:
        key = "initial." + sorted(extra)[0]
        raise ConfigError(f"not a parameter of initial.kind = {kind}", lines.get(key), key)
    if kind == "concentrated":
        missing = {"M0", "M0_tilde", "r_star", "L"} - set(init)
        if missing:
            raise ConfigError(f"concentrated data needs initial.{', initial.'.join(sorted(missing))}")
    if kind == "file" and "path" not in init:
        raise ConfigError("file data needs initial.path")

    run = values["run"]
    stride = run.get("stride", 1)
    if stride < 1:
        raise ConfigError("stride must be >= 1", lines.get("run.stride"), "run.stride")
    fit_k = run.get("fit_k", 10)
    if fit_k < 3:
        raise ConfigError("fit_k must be >= 3", lines.get("run.fit_k"), "run.fit_k")
    lp = (run.get("lp_p", 2.0), run.get("lp_q", 2.0))
    for name, val in zip(("run.lp_p", "run.lp_q"), lp):
        if not val >= 1:
            raise ConfigError("Lebesgue exponents must be >= 1", lines.get(name), name)
    return RunConfig(
        model=model,
        grid=grid,
        step=step,
        moments=moments,
        initial=InitialConfig(kind=kind, params=init),
        stride=stride,
        fit_k=fit_k,
        lp=lp,
        seed=run.get("seed", 0),
        store_profiles=run.get("store_profiles", False),
        sweep=sweep,
        base_dir=base_dir,
    )


def _empty_values() -> dict:
    return {s: {} for s in ("model", "grid", "step", "moments", "initial", "run")}


def parse_text(text: str, base_dir: str = ".") -> RunConfig:
    """Parse configuration text; raises :class:`ConfigError` with line diagnostics."""
    pairs = _read_pairs(text)
    if not pairs:
        raise ConfigError("configuration defines no keys")
    values = _empty_values()
    sweep: dict[str, list[str]] = {}
    lines = {}
    for lineno, key, value in pairs:
        lines[key] = lineno
        if key.startswith("sweep."):
            target = key[len("sweep."):]
            items = [x.strip() for x in value.split(",")] if value.strip() else []
            probe = _empty_values()
            for item in items:
                _apply(probe, target, item, lineno)
            sweep[target] = items
        else:
            _apply(values, key, value, lineno)
    # a swept key may be absent from the base; its first value stands in
    for target, items in sweep.items():
        section, _, name = target.partition(".")
        if items and name not in values.get(section, {}):
            _apply(values, target, items[0], lines[f"sweep.{target}"])
    cfg = _build(values, sweep, base_dir, lines)
    # every sweep value must give a valid configuration on its own
    for target, items in sweep.items():
        for item in items:
            try:
                override(cfg, target, item)
            except ConfigError as exc:
                raise ConfigError(f"sweep value {item!r}: {exc.message}", lines[f"sweep.{target}"], target) from None
    return cfg


def load(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_text(text, base_dir=str(path.parent))


def override(cfg: RunConfig, key: str, raw: str) -> RunConfig:
    """Return ``cfg`` with one dotted key replaced (used by sweeps)."""
    canon = cfg.canonical()
    values = _empty_values()
    values["model"] = {k: v for k, v in canon["model"].items()}
    values["grid"] = dict(canon["grid"])
    values["step"] = dict(canon["step"])
    if canon["moments"] is not None:
        values["moments"] = {k: v for k, v in canon["moments"].items() if v is not None}
    values["initial"] = dict(canon["initial"])
    values["run"] = dict(canon["run"])
    _apply(values, key, raw, None)
    return _build(values, {}, cfg.base_dir, {})


def sweep_points(cfg: RunConfig) -> list[tuple[dict, RunConfig]]:
    """Cartesian product of the sweep lists, in file order with the last key varying fastest."""
    keys = list(cfg.sweep)
    if any(not cfg.sweep[k] for k in keys):
        return []
    points = [({}, replace(cfg, sweep={}))]
    for key in keys:
        points = [
            ({**assigned, key: raw}, override(c, key, raw)) for assigned, c in points for raw in cfg.sweep[key]
        ]
    return points
