"""Initial data families and hypothesis checks on user-supplied data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .functionals import profile_check
from .grid import RadialField, RadialGrid, mass, mass_within

__all__ = [
    "InfeasibleData",
    "make_concentrated",
    "make_bump",
    "BoundedHypothesis",
    "KSBlowupHypothesis",
    "JLBlowupHypothesis",
    "ValidationReport",
    "validate",
]

MASS_RTOL = 1e-10


class InfeasibleData(ValueError):
    """Requested data cannot satisfy the constraints; ``best`` is the best achievable value."""

    def __init__(self, message: str, best: float):
        super().__init__(message)
        self.best = best


def _truncated_power(g: RadialGrid, M0: float, L: float) -> np.ndarray:
    """Cell values min(K, L r_{i+1}^{-n(n-1)}) with K chosen so the mass is M0."""
    caps = L * g.face_radii[1:] ** (-float(g.n * (g.n - 1)))
    V = g.shell_volumes
    capacity = float(np.dot(caps, V))
    if M0 > capacity:
        raise InfeasibleData(
            f"total mass {M0} exceeds the capacity {capacity:.6g} allowed by the profile bound L = {L}",
            best=capacity,
        )
    # K in [caps_j, caps_{j-1}]: inner cells j' < j sit at K, the rest at their cap
    inner_vol = np.concatenate(([0.0], np.cumsum(V)))
    tail = np.concatenate((np.cumsum((caps * V)[::-1])[::-1], [0.0]))
    upper = np.concatenate(([math.inf], caps))
    lower = np.concatenate((caps, [0.0]))
    for j in range(1, g.m + 1):
        K = (M0 - tail[j]) / inner_vol[j]
        if lower[j] <= K <= upper[j - 1]:
            break
    else:  # pragma: no cover - the capacity check above guarantees a bracket
        raise InfeasibleData("no plateau level found", best=capacity)
    return np.minimum(K, caps)


def make_concentrated(
    g: RadialGrid,
    M0: float,
    M0_tilde: float,
    r_star: float,
    L: float,
    split: float = 0.5,
) -> tuple[RadialField, RadialField]:
    """Truncated-power data min(K, L r^-n(n-1)) with total mass M0.

    The combined profile f is nonincreasing and meets the pointwise bound
    with equality in its tail; ``u0 = (1 - split) f`` and ``v0 = split f``.
    Raises :class:`InfeasibleData` (carrying the achieved B_{r_star} mass)
    when less than ``M0_tilde`` ends up inside B_{r_star}.
    """
    if not 0 < M0_tilde < M0:
        raise InfeasibleData(f"need 0 < M0_tilde < M0, got M0_tilde={M0_tilde}, M0={M0}", best=math.nan)
    if not 0 < r_star < g.R:
        raise ValueError(f"r_star must lie in (0, R={g.R}), got {r_star}")
    if not L > 0:
        raise ValueError("L must be positive")
    if not 0 <= split <= 1:
        raise ValueError("split must lie in [0, 1]")
    f = _truncated_power(g, M0, L)
    f *= M0 / float(np.dot(f, g.shell_volumes))
    total = g.field(f)
    inner = mass_within(total, r_star)
    if inner < M0_tilde:
        raise InfeasibleData(
            f"only {inner:.6g} of the mass lies in B_{r_star}, below M0_tilde = {M0_tilde}",
            best=inner,
        )
    return g.field((1.0 - split) * f), g.field(split * f)


def make_bump(
    g: RadialGrid, amplitude: float = 1.0, width: float = 0.3, base: float = 0.5, split: float = 0.5
) -> tuple[RadialField, RadialField]:
    """Smooth nonincreasing data base + amplitude exp(-(r/width)^2), shared by u0 and v0."""
    f = base + amplitude * np.exp(-((g.cell_centers / width) ** 2))
    return g.field((1.0 - split) * f), g.field(split * f)


@dataclass(frozen=True)
class BoundedHypothesis:
    pass


@dataclass(frozen=True)
class KSBlowupHypothesis:
    L: float
    M0: float
    M0_tilde: float
    r_star: float


@dataclass(frozen=True)
class JLBlowupHypothesis:
    M0: float
    M0_tilde: float
    r_star: float


Hypothesis = Union[BoundedHypothesis, KSBlowupHypothesis, JLBlowupHypothesis]


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    def add(self, name: str, passed: bool, value: float) -> None:
        self.checks.append((name, bool(passed), float(value)))

    @property
    def ok(self) -> bool:
        return all(passed for _, passed, _ in self.checks)

    def failed(self) -> list:
        return [name for name, passed, _ in self.checks if not passed]

    def __str__(self) -> str:
        return "\n".join(f"{'PASS' if ok else 'FAIL'}  {name}  ({val:.6g})" for name, ok, val in self.checks)


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= MASS_RTOL * max(abs(a), abs(b))


def validate(u0: RadialField, v0: RadialField, hypothesis: Hypothesis) -> ValidationReport:
    """Check initial data against the hypotheses of one of the three results."""
    report = ValidationReport()
    same = u0.grid.same_as(v0.grid)
    report.add("same grid", same, 0.0)
    if not same:
        return report
    report.add("u0 >= 0", np.all(u0.values >= 0), float(np.min(u0.values)))
    report.add("v0 >= 0", np.all(v0.values >= 0), float(np.min(v0.values)))

    if isinstance(hypothesis, KSBlowupHypothesis):
        h = hypothesis
        total = u0.grid.field(u0.values + v0.values)
        report.add("0 < M0_tilde < M0", 0 < h.M0_tilde < h.M0, h.M0_tilde)
        m = mass(total)
        report.add("mass(u0 + v0) = M0", _close(m, h.M0), m)
        inner = mass_within(total, h.r_star)
        report.add("mass of u0 + v0 in B_r* >= M0_tilde", inner >= h.M0_tilde, inner)
        ok, const = profile_check(u0, v0, 0.0, h.L)
        report.add("u0 + v0 <= L |x|^-n(n-1)", ok, const)
    elif isinstance(hypothesis, JLBlowupHypothesis):
        h = hypothesis
        report.add("0 < M0_tilde < M0", 0 < h.M0_tilde < h.M0, h.M0_tilde)
        for name, f in (("u0", u0), ("v0", v0)):
            rise = float(np.max(np.diff(f.values))) if f.grid.m > 1 else 0.0
            report.add(f"{name} nonincreasing", rise <= 0.0, rise)
        m = mass(u0)
        report.add("mass(u0) = M0", _close(m, h.M0), m)
        inner = mass_within(u0, h.r_star)
        report.add("mass of u0 in B_r* >= M0_tilde", inner >= h.M0_tilde, inner)
    elif not isinstance(hypothesis, BoundedHypothesis):
        raise TypeError(f"unknown hypothesis {hypothesis!r}")
    return report
