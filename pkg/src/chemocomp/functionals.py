"""Moment functionals of the accumulated mass and the Riccati audit.

For a piecewise-linear U with U(0) = 0 the functionals

    phi = int_0^{s0} s^{-b} (s0 - s) U ds,
    psi = int_0^{s0} s^{-b} (s0 - s) U U_s ds

reduce cell by cell to integrals of s^{-b}, s^{1-b}, s^{2-b}, which are
evaluated analytically.  On the first cell U = q s, so the s^{-b} term
drops out and b up to (but excluding) 2 is admissible.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar, nnls

from .grid import Accumulated, RadialField, accumulate
from .model import ModelParams
from .records import MomentSample, RunRecord

__all__ = [
    "Regime",
    "MomentConfig",
    "phi",
    "psi",
    "psi_phi_gap",
    "riccati_blowup_bound",
    "profile_check",
    "concavity_margin",
    "mean_value_violation",
    "default_profile_eps",
    "concentration_radius",
    "moment_sample",
    "InequalityAudit",
    "audit_inequality",
]


class Regime(str, enum.Enum):
    KS = "ks"
    JL = "jl"


def default_profile_eps(n: int) -> float:
    """Largest eps with 2 eps <= 1 - 2/n."""
    return 0.5 * (1.0 - 2.0 / n)


def concentration_radius(s0: float, n: int) -> float:
    """Concentration radius (s0/4)^(1/n) used with a given moment window s0."""
    return (s0 / 4.0) ** (1.0 / n)


@dataclass(frozen=True)
class MomentConfig:
    s0: float
    b: float
    regime: Regime = Regime.KS
    eps: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        if not self.s0 > 0:
            raise ValueError(f"s0 must be positive, got {self.s0!r}")
        if not self.b < 2:
            raise ValueError(f"b must be < 2 for the weight to be integrable against U = O(s), got {self.b!r}")

    def window(self, n: int) -> tuple[float, float]:
        if self.regime is Regime.KS:
            return 1.0 - 2.0 / n, min(1.0, 2.0 - 4.0 / n)
        return 1.0, 2.0 - 4.0 / n

    def validate(self, n: int, R: float) -> None:
        lo, hi = self.window(n)
        if not lo < self.b < hi:
            raise ValueError(f"b = {self.b} outside the {self.regime.value} window ({lo:.6g}, {hi:.6g}) for n = {n}")
        if not self.s0 < R**n:
            raise ValueError(f"s0 = {self.s0} must lie in (0, R^n) = (0, {R**n:.6g})")

    def profile_eps(self, n: int) -> float:
        return default_profile_eps(n) if self.eps is None else self.eps

    def kappa_condition(self, p: ModelParams) -> tuple[bool, float]:
        """(n-1)(max(kappa1, kappa2) - 1) < b/2, reported rather than enforced."""
        lhs = (p.n - 1) * (max(p.kappa1, p.kappa2) - 1)
        return lhs < self.b / 2, lhs

    def as_dict(self) -> dict:
        d = asdict(self)
        d["regime"] = self.regime.value
        return d


def _power_integral(k: float, a: np.ndarray, c: np.ndarray) -> np.ndarray:
    """int_a^c s^k ds for 0 < a < c, written to avoid cancellation."""
    e = k + 1.0
    log_ratio = np.log(c / a)
    if e == 0.0:
        return log_ratio
    return a**e * np.expm1(e * log_ratio) / e


def _cell_weights(U: Accumulated, s0: float, b: float):
    """Per-cell int s^{-b}(s0-s)(p + q s) ds over [s_i, s_{i+1}] clipped at s0, plus q."""
    if not b < 2:
        raise ValueError(f"b must be < 2, got {b!r}")
    if not 0 < s0 <= U.s_max * (1 + 1e-14):
        raise ValueError(f"s0 = {s0!r} outside (0, {U.s_max!r}]")
    nodes = U.s_nodes
    k = int(np.searchsorted(nodes, s0, side="left"))
    k = max(1, min(k, nodes.size - 1))
    left = nodes[:k].copy()
    right = nodes[1 : k + 1].copy()
    right[-1] = s0
    q = U.slopes[:k]
    p = U.values[:k] - q * left

    out = np.empty(k)
    # first cell: U = q s exactly
    c0 = right[0]
    out[0] = q[0] * (s0 * c0 ** (2 - b) / (2 - b) - c0 ** (3 - b) / (3 - b))
    if k > 1:
        a, c, pp, qq = left[1:], right[1:], p[1:], q[1:]
        out[1:] = (
            pp * s0 * _power_integral(-b, a, c)
            + (qq * s0 - pp) * _power_integral(1 - b, a, c)
            - qq * _power_integral(2 - b, a, c)
        )
    return out, q


def phi(U: Accumulated, cfg: MomentConfig) -> float:
    w, _ = _cell_weights(U, cfg.s0, cfg.b)
    return float(w.sum())


def psi(U: Accumulated, cfg: MomentConfig) -> float:
    w, q = _cell_weights(U, cfg.s0, cfg.b)
    return float(np.dot(w, q))


def psi_phi_gap(U: Accumulated, cfg: MomentConfig) -> float:
    """Empirical constant psi s0^(3-b) / phi^2; ``inf`` when phi vanishes."""
    w, q = _cell_weights(U, cfg.s0, cfg.b)
    ph = float(w.sum())
    if ph <= 0.0:
        return math.inf
    return float(np.dot(w, q)) * cfg.s0 ** (3 - cfg.b) / ph**2


def riccati_blowup_bound(A: float, B: float, phi0: float) -> Optional[float]:
    """Blow-up time of phi' = A phi^2 - B started from phi0, or None if it never blows up."""
    if not A > 0:
        raise ValueError(f"A must be positive, got {A!r}")
    if B < 0:
        raise ValueError(f"B must be nonnegative, got {B!r}")
    if B == 0:
        return None if phi0 <= 0 else 1.0 / (A * phi0)
    k = math.sqrt(B / A)
    if phi0 <= k:
        return None
    return math.log1p(2 * k / (phi0 - k)) / (2 * math.sqrt(A * B))


def profile_check(u: RadialField, v: RadialField, eps: float, L: float) -> tuple[bool, float]:
    """sup over cells of (u + v) r^(n(n-1)+eps) and whether it is <= L.

    For cell-constant data the supremum over a cell sits at its outer face.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    g = u.grid
    power = g.n * (g.n - 1) + eps
    const = float(np.max((u.values + v.values) * g.face_radii[1:] ** power))
    return const <= L * (1 + 1e-12), const


def concavity_margin(u: RadialField, v: RadialField) -> float:
    """Largest upward jump of U_s or V_s across a face (<= 0 for nonincreasing data)."""
    if u.grid.m < 2:
        return 0.0
    n = u.grid.n
    return float(max(np.max(np.diff(u.values)), np.max(np.diff(v.values))) / n)


def mean_value_violation(U: Accumulated) -> float:
    """Max violation of U_s(s) <= U(s)/s <= U_s(0+) over the nodes s > 0."""
    s = U.s_nodes[1:]
    ratio = U.values[1:] / s
    # right-hand slope at each node; the last node uses its left cell
    right_slope = np.append(U.slopes[1:], U.slopes[-1])
    lower = np.max(right_slope - ratio)
    upper = np.max(ratio - U.slopes[0])
    return float(max(lower, upper, 0.0))


def moment_sample(t: float, u: RadialField, v: RadialField, cfg: MomentConfig) -> MomentSample:
    Uu = accumulate(u)
    Uv = accumulate(v)
    wu, qu = _cell_weights(Uu, cfg.s0, cfg.b)
    wv, qv = _cell_weights(Uv, cfg.s0, cfg.b)
    _, const = profile_check(u, v, cfg.profile_eps(u.grid.n), math.inf)
    return MomentSample(
        t=t,
        phi_u=float(wu.sum()),
        phi_v=float(wv.sum()),
        psi_u=float(np.dot(wu, qu)),
        psi_v=float(np.dot(wv, qv)),
        concavity_margin=concavity_margin(u, v),
        profile_constant=const,
    )


@dataclass
class InequalityAudit:
    """Outcome of fitting phi' >= A phi^2 - B to a sampled trajectory."""

    times: list
    phi: list
    dphi: list
    slack: list
    A: float
    B: float
    c_fit: float
    gap_min: float
    A_structural: Optional[float]
    t_start: float
    bound: Optional[float]
    observed_t: float
    stride_t: float
    consistent: bool

    def as_dict(self) -> dict:
        return asdict(self)


def _leading_coefficient(p: ModelParams, cfg: MomentConfig) -> Optional[float]:
    """Coefficient of psi left after absorbing the competing terms."""
    n = p.n
    if cfg.regime is Regime.KS:
        return 0.5 * min(p.alpha * p.chi1, p.beta * p.chi2) * n / p.d3
    if p.kappa1 == 2.0:
        c = (p.alpha * p.chi1 / p.d3 - p.mu1 / (cfg.b - 1)) * n
    else:
        c = 0.5 * p.alpha * p.chi1 * n / p.d3
    return c if c > 0 else None


def _fit(times: np.ndarray, ph: np.ndarray, dph: np.ndarray, interior: slice):
    """Choose A > 0 minimising the induced blow-up time with B(A) making every slack >= 0."""
    pk, dk = ph[interior], dph[interior]
    t0, phi0 = times[0], ph[0]

    def B_of(A):
        return max(0.0, float(np.max(A * pk**2 - dk)))

    def T_of(A):
        T = riccati_blowup_bound(A, B_of(A), phi0) if phi0 > 0 else None
        return math.inf if T is None else t0 + T

    # feasible A for a finite bound: phi0^2 > pk^2 - dk/A at every interior sample
    D = pk**2 - phi0**2
    lo, hi = 0.0, math.inf
    finite_possible = phi0 > 0
    for Dk, dk_ in zip(D, dk):
        if dk_ > 0:
            if Dk > 0:
                hi = min(hi, dk_ / Dk)
        elif Dk >= 0:
            finite_possible = False
        else:
            lo = max(lo, dk_ / Dk)
    finite_possible = finite_possible and lo < hi

    x, *_ = nnls(np.column_stack([pk**2, -np.ones_like(pk)]), dk)
    A_ls = x[0] if x[0] > 0 else None

    if not finite_possible:
        A = A_ls if A_ls is not None else 1.0 / max(float(np.max(pk**2)), 1e-300)
        return A, B_of(A), None

    ref = A_ls or (float(np.max(dk)) / max(float(np.max(pk**2)), 1e-300)) or 1.0
    a_lo = lo if lo > 0 else ref * 1e-8
    a_hi = hi if math.isfinite(hi) else ref * 1e8
    a_lo = max(a_lo, a_hi * 1e-16)
    # endpoints nudged inwards: the optimum often sits on the feasibility edge
    grid = np.geomspace(a_lo * (1 + 1e-12), a_hi * (1 - 1e-12), 401) if a_hi > a_lo else np.array([a_lo])
    vals = np.array([T_of(A) for A in grid])
    j = int(np.argmin(vals))
    best_A, best_T = grid[j], vals[j]
    if grid.size > 2 and math.isfinite(best_T):
        lo_j, hi_j = grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]
        res = minimize_scalar(
            lambda la: T_of(math.exp(la)),
            bounds=(math.log(lo_j), math.log(hi_j)),
            method="bounded",
            options={"xatol": 1e-12},
        )
        if res.fun < best_T:
            best_A, best_T = math.exp(res.x), res.fun
    T = None if not math.isfinite(best_T) else best_T - t0
    return best_A, B_of(best_A), T


def audit_inequality(record: RunRecord, cfg: MomentConfig, params: Optional[ModelParams] = None) -> InequalityAudit:
    """Fit phi' >= A phi^2 - B along a run and compare the implied blow-up time.

    Keller-Segel audits phi_U + phi_V, Jaeger-Luckhaus audits phi_U.
    Derivatives are second-order differences on the (non-uniform) sample
    times; only interior samples constrain the fit.  (A, B) is chosen to
    make every interior slack nonnegative while minimising the induced
    bound, which starts from the first sample.
    """
    samples = [s for s in record.samples if s.moments is not None]
    if len(samples) < 3:
        raise ValueError("need at least 3 samples with moments to audit")
    times = np.array([s.t for s in samples])
    phi_u = np.array([s.moments.phi_u for s in samples])
    phi_v = np.array([s.moments.phi_v for s in samples])
    psi_u = np.array([s.moments.psi_u for s in samples])
    psi_v = np.array([s.moments.psi_v for s in samples])
    if cfg.regime is Regime.KS:
        ph = phi_u + phi_v
        gaps = [
            ps * cfg.s0 ** (3 - cfg.b) / pf**2
            for ps, pf in zip(np.concatenate([psi_u, psi_v]), np.concatenate([phi_u, phi_v]))
            if pf > 0
        ]
    else:
        ph = phi_u
        gaps = [ps * cfg.s0 ** (3 - cfg.b) / pf**2 for ps, pf in zip(psi_u, phi_u) if pf > 0]
    dph = np.gradient(ph, times)
    interior = slice(1, len(samples) - 1)

    A, B, T = _fit(times, ph, dph, interior)
    slack = dph[interior] - (A * ph[interior] ** 2 - B)
    gap_min = float(min(gaps)) if gaps else math.inf
    A_struct = None
    if params is not None and math.isfinite(gap_min):
        coef = _leading_coefficient(params, cfg)
        if coef is not None:
            A_struct = gap_min * coef * cfg.s0 ** (-(3 - cfg.b))
    observed = float(record.termination.t)
    stride_t = float(times[-1] - times[-2])
    bound = None if T is None else float(times[0] + T)
    consistent = bound is None or bound >= observed - stride_t
    return InequalityAudit(
        times=times[interior].tolist(),
        phi=ph[interior].tolist(),
        dphi=dph[interior].tolist(),
        slack=slack.tolist(),
        A=float(A),
        B=float(B),
        c_fit=float(A * cfg.s0 ** (3 - cfg.b)),
        gap_min=gap_min,
        A_structural=A_struct,
        t_start=float(times[0]),
        bound=bound,
        observed_t=observed,
        stride_t=stride_t,
        consistent=consistent,
    )
