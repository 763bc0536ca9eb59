"""Time stepping for the two parabolic equations.

One step is IMEX: chemotactic advection and the logistic reaction are
explicit (first-order upwind on the face velocity ``chi w_r``), diffusion is
a theta scheme.  With theta = 1 the implicit matrix is an M-matrix, so
positivity rests on the explicit part alone.  The step size keeps the
advective outflow of every cell below ``cfl_advection`` of its content and
the reaction decrement below one half, so each cell keeps at least a tenth of
its mass before diffusion.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.optimize

from .elliptic import EllipticSolveError, face_transmissibility, flux_wr, solve_w
from .functionals import MomentConfig, moment_sample
from .grid import RadialField, RadialGrid, lp_norm, mass
from .model import ModelParams
from .records import Cause, RunRecord, Sample, Termination

__all__ = [
    "State",
    "StepControl",
    "StepCollapse",
    "make_state",
    "step",
    "run",
    "fit_blowup",
    "MassAudit",
    "mass_audit",
]

log = logging.getLogger(__name__)

REACTION_FRACTION = 0.5
EXPLICIT_DIFFUSION_FRACTION = 0.1


class StepCollapse(RuntimeError):
    """The admissible time step fell below ``dt_min``."""

    def __init__(self, message: str, dt: float):
        super().__init__(message)
        self.dt = dt


@dataclass(frozen=True)
class State:
    t: float
    u: RadialField
    v: RadialField
    w: RadialField
    dt_last: float = 0.0
    step_count: int = 0

    @property
    def grid(self) -> RadialGrid:
        return self.u.grid

    @property
    def sup(self) -> float:
        return float(np.max(self.u.values) + np.max(self.v.values))


@dataclass(frozen=True)
class StepControl:
    t_end: float = 1.0
    cfl_advection: float = 0.4
    diffusion_theta: float = 1.0
    dt_min: float = 1e-12
    dt_max: float = 1e-2
    blowup_threshold: float = 1e8
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not 0 < self.cfl_advection < 1 - REACTION_FRACTION:
            raise ValueError(f"cfl_advection must lie in (0, {1 - REACTION_FRACTION})")
        if not 0 <= self.diffusion_theta <= 1:
            raise ValueError("diffusion_theta must lie in [0, 1]")
        if not self.dt_min > 0:
            raise ValueError("dt_min must be positive")
        if not self.dt_max >= self.dt_min:
            raise ValueError("dt_max must be at least dt_min")
        if not self.blowup_threshold > 0:
            raise ValueError("blowup_threshold must be positive")
        if not self.max_steps >= 1:
            raise ValueError("max_steps must be >= 1")

    def as_dict(self) -> dict:
        return {
            "t_end": self.t_end,
            "cfl_advection": self.cfl_advection,
            "diffusion_theta": self.diffusion_theta,
            "dt_min": self.dt_min,
            "dt_max": self.dt_max,
            "blowup_threshold": self.blowup_threshold,
            "max_steps": self.max_steps,
        }


def make_state(p: ModelParams, u0: RadialField, v0: RadialField, t: float = 0.0) -> State:
    if not u0.grid.same_as(v0.grid):
        raise ValueError("u0 and v0 live on different grids")
    if np.any(u0.values < 0) or np.any(v0.values < 0):
        raise ValueError("initial densities must be nonnegative")
    return State(t=t, u=u0, v=v0, w=solve_w(p, u0.grid, u0, v0))


def _face_velocity(p: ModelParams, s: State) -> np.ndarray:
    """w_r at faces with the no-flux ends pinned to zero."""
    wr = flux_wr(p, s.grid, s.u, s.v, s.w)
    wr[0] = 0.0
    wr[-1] = 0.0
    return wr


def _outflow_rate(g: RadialGrid, vel: np.ndarray) -> np.ndarray:
    """Per-cell rate at which upwind advection with face velocity ``vel`` empties a cell."""
    A = g.face_areas
    out = A[1:] * np.maximum(vel[1:], 0.0) + A[:-1] * np.maximum(-vel[:-1], 0.0)
    return out / g.shell_volumes


def _upwind_divergence(g: RadialGrid, f: np.ndarray, vel: np.ndarray) -> np.ndarray:
    """Cell average of div(f vel) with f taken from the upwind side of each face."""
    flux = np.zeros(g.m + 1)
    inner = vel[1:-1]
    flux[1:-1] = g.face_areas[1:-1] * np.where(inner > 0, inner * f[:-1], inner * f[1:])
    return np.diff(flux) / g.shell_volumes


def _laplacian(g: RadialGrid, d: float, f: np.ndarray) -> np.ndarray:
    flux = np.zeros(g.m + 1)
    flux[1:-1] = face_transmissibility(g, d) * np.diff(f)
    return np.diff(flux) / g.shell_volumes


def _reaction(mu: float, a: float, kappa: float, lam: float, f: np.ndarray, other: np.ndarray) -> np.ndarray:
    return mu * f * (1.0 - f ** (kappa - 1.0) - a * other ** (lam - 1.0))


def _reaction_dt(p: ModelParams, s: State) -> float:
    su = float(np.max(s.u.values))
    sv = float(np.max(s.v.values))
    rate = max(
        p.mu1 * (1.0 + su ** (p.kappa1 - 1.0) + p.a1 * sv ** (p.lambda1 - 1.0)),
        p.mu2 * (1.0 + sv ** (p.kappa2 - 1.0) + p.a2 * su ** (p.lambda2 - 1.0)),
    )
    return REACTION_FRACTION / rate


def _admissible_dt(p: ModelParams, s: State, c: StepControl, vel1: np.ndarray, vel2: np.ndarray) -> float:
    g = s.grid
    dt = min(c.dt_max, c.t_end - s.t, _reaction_dt(p, s))
    rate = max(float(np.max(_outflow_rate(g, vel1))), float(np.max(_outflow_rate(g, vel2))))
    if rate > 0:
        dt = min(dt, c.cfl_advection / rate)
    # plain Courant bound dr / |vel| on every face, with dr the narrower neighbouring cell
    speed = np.maximum(np.abs(vel1), np.abs(vel2))[1:-1]
    if speed.size and float(np.max(speed)) > 0:
        width = np.diff(g.face_radii)
        dr = np.minimum(width[:-1], width[1:])
        moving = speed > 0
        dt = min(dt, c.cfl_advection * float(np.min(dr[moving] / speed[moving])))
    if c.diffusion_theta < 1.0:
        # explicit share of diffusion must not drain a cell either
        lap_rate = np.zeros(g.m)
        T = face_transmissibility(g, 1.0)
        lap_rate[:-1] += T
        lap_rate[1:] += T
        lap_rate /= g.shell_volumes
        d = max(p.d1, p.d2) * (1.0 - c.diffusion_theta)
        if d > 0 and g.m > 1:
            dt = min(dt, EXPLICIT_DIFFUSION_FRACTION / (d * float(np.max(lap_rate))))
    return dt


def _implicit_diffusion(g: RadialGrid, d: float, theta_dt: float, rhs: np.ndarray) -> np.ndarray:
    """Solve (I - theta dt d Lap) x = rhs, written in the symmetric form (V - theta dt d K) x = V rhs."""
    if theta_dt == 0.0 or d == 0.0 or g.m == 1:
        return rhs
    V = g.shell_volumes
    T = face_transmissibility(g, d * theta_dt)
    ab = np.zeros((2, g.m))
    ab[0, 1:] = -T
    ab[1, :] = V
    ab[1, :-1] += T
    ab[1, 1:] += T
    return scipy.linalg.solveh_banded(ab, V * rhs, check_finite=False)


def step(p: ModelParams, s: State, c: StepControl) -> State:
    """Advance one IMEX step; raises :class:`StepCollapse` when dt < dt_min."""
    g = s.grid
    wr = _face_velocity(p, s)
    vel1 = p.chi1 * wr
    vel2 = p.chi2 * wr
    dt = _admissible_dt(p, s, c, vel1, vel2)
    remaining = c.t_end - s.t
    if remaining - dt <= 1e-12 * c.t_end:
        # absorb the round-off sliver that repeated t += dt leaves before t_end
        dt = remaining
    if dt < c.dt_min and dt < remaining:
        raise StepCollapse(f"admissible step {dt:.3e} below dt_min {c.dt_min:.1e} at t = {s.t:.17g}", dt)
    u, v = s.u.values, s.v.values
    explicit = 1.0 - c.diffusion_theta
    du = -_upwind_divergence(g, u, vel1) + _reaction(p.mu1, p.a1, p.kappa1, p.lambda1, u, v)
    dv = -_upwind_divergence(g, v, vel2) + _reaction(p.mu2, p.a2, p.kappa2, p.lambda2, v, u)
    if explicit > 0:
        du = du + explicit * _laplacian(g, p.d1, u)
        dv = dv + explicit * _laplacian(g, p.d2, v)
    u_star = u + dt * du
    v_star = v + dt * dv
    theta_dt = c.diffusion_theta * dt
    u_new = _implicit_diffusion(g, p.d1, theta_dt, u_star)
    v_new = _implicit_diffusion(g, p.d2, theta_dt, v_star)
    # clip round-off negatives of order eps * sup; genuine negatives signal a bug
    floor = -1e-12 * max(1.0, float(np.max(np.abs(u_new))), float(np.max(np.abs(v_new))))
    if np.min(u_new) < floor or np.min(v_new) < floor:
        raise AssertionError(f"positivity lost at t = {s.t}: min u {np.min(u_new)}, min v {np.min(v_new)}")
    uf = g.field(np.maximum(u_new, 0.0))
    vf = g.field(np.maximum(v_new, 0.0))
    t_new = s.t + dt if dt < remaining else c.t_end
    return State(t=t_new, u=uf, v=vf, w=solve_w(p, g, uf, vf), dt_last=dt, step_count=s.step_count + 1)


def fit_blowup(times: np.ndarray, sups: np.ndarray) -> tuple[Optional[float], Optional[float]]:
    """Fit sup ~ C (T - t)^(-q) by a 1-D search on T with linear least squares in log space."""
    times = np.asarray(times, dtype=float)
    sups = np.asarray(sups, dtype=float)
    ok = np.isfinite(sups) & (sups > 0)
    times, sups = times[ok], sups[ok]
    if times.size < 3 or not np.all(np.diff(times) > 0):
        return None, None
    y = np.log(sups)
    t_last = times[-1]
    span = max(t_last - times[0], 1e-300)

    def residual(log_gap: float) -> tuple[float, float]:
        T = t_last + math.exp(log_gap)
        X = np.column_stack([np.ones_like(times), -np.log(T - times)])
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        r = y - X @ coef
        return float(r @ r), float(coef[1])

    lo, hi = math.log(span * 1e-8), math.log(span * 1e3)
    grid = np.linspace(lo, hi, 200)
    vals = [residual(x)[0] for x in grid]
    k = int(np.argmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    best = scipy.optimize.minimize_scalar(lambda x: residual(x)[0], bounds=(a, b), method="bounded")
    x = best.x if best.fun <= vals[k] else grid[k]
    _, q = residual(x)
    return t_last + math.exp(x), q


def _sample(s: State, lp: tuple[float, float], moments: Optional[MomentConfig]) -> Sample:
    u, v = s.u, s.v
    return Sample(
        t=s.t,
        step=s.step_count,
        dt=s.dt_last,
        mass_u=mass(u),
        mass_v=mass(v),
        sup_u=float(np.max(u.values)),
        sup_v=float(np.max(v.values)),
        min_u=float(np.min(u.values)),
        min_v=float(np.min(v.values)),
        lp_u=lp_norm(u, lp[0]),
        lp_v=lp_norm(v, lp[1]),
        moments=moment_sample(s.t, u, v, moments) if moments is not None else None,
    )


def run(
    p: ModelParams,
    initial: State,
    c: StepControl,
    moments: Optional[MomentConfig] = None,
    stride: int = 1,
    lp_exponents: tuple[float, float] = (2.0, 2.0),
    fit_k: int = 10,
    store_profiles: bool = False,
) -> RunRecord:
    """Advance until t_end, the blow-up threshold, or step collapse.

    Samples are taken every ``stride`` steps plus at termination.  Step
    errors become termination causes; nothing is raised.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if moments is not None:
        moments.validate(initial.grid.n, initial.grid.R)
    s = initial
    samples = [_sample(s, lp_exponents, moments)]
    profiles = {"t": [s.t], "u": [s.u.values.copy()], "v": [s.v.values.copy()]} if store_profiles else None
    cause, message = Cause.REACHED_T_END, ""
    last_sampled = s.step_count

    def record(state: State) -> None:
        samples.append(_sample(state, lp_exponents, moments))
        if profiles is not None:
            profiles["t"].append(state.t)
            profiles["u"].append(state.u.values.copy())
            profiles["v"].append(state.v.values.copy())

    while True:
        if s.sup >= c.blowup_threshold:
            cause = Cause.BLOWUP_THRESHOLD
            message = f"sup-norm {s.sup:.6g} reached threshold {c.blowup_threshold:.3g}"
            break
        if s.t >= c.t_end:
            break
        if s.step_count - initial.step_count >= c.max_steps:
            # a mesh-scale spike can stall dt far above dt_min yet far below t_end / max_steps
            cause = Cause.STEP_COLLAPSE
            message = f"step budget {c.max_steps} exhausted at t = {s.t:.17g} with dt = {s.dt_last:.3e}"
            break
        try:
            s = step(p, s, c)
        except StepCollapse as exc:
            cause, message = Cause.STEP_COLLAPSE, str(exc)
            break
        except (EllipticSolveError, FloatingPointError, np.linalg.LinAlgError) as exc:
            cause, message = Cause.STEP_COLLAPSE, f"solver failure: {exc}"
            break
        if not (np.all(np.isfinite(s.u.values)) and np.all(np.isfinite(s.v.values))):
            cause, message = Cause.STEP_COLLAPSE, "non-finite densities"
            break
        if s.step_count % stride == 0:
            record(s)
            last_sampled = s.step_count
    if last_sampled != s.step_count and np.all(np.isfinite(s.u.values)):
        record(s)
    log.info("run ended: %s at t=%.6g after %d steps", cause.value, s.t, s.step_count)

    term = Termination(cause=cause, t=s.t, message=message)
    if cause is not Cause.REACHED_T_END:
        k = max(3, fit_k)
        tail = samples[-k:]
        term.fit_T, term.fit_q = fit_blowup([x.t for x in tail], [x.sup for x in tail])
    g = s.grid
    return RunRecord(
        samples=samples,
        termination=term,
        params=p.as_dict(),
        moments=moments.as_dict() if moments is not None else None,
        lp_exponents=tuple(lp_exponents),
        stride=stride,
        final={
            "r": g.cell_centers.tolist(),
            "u": s.u.values.tolist(),
            "v": s.v.values.tolist(),
            "w": s.w.values.tolist(),
        },
        profiles=(
            {"t": profiles["t"], "u": [x.tolist() for x in profiles["u"]], "v": [x.tolist() for x in profiles["v"]]}
            if profiles is not None
            else None
        ),
    )


@dataclass
class MassAudit:
    ok: bool
    max_violation: float
    violations: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"ok": self.ok, "max_violation": self.max_violation, "violations": self.violations}


def mass_audit(record: RunRecord, p: ModelParams, rtol: float = 1e-8) -> MassAudit:
    """Check mass(t) <= exp(mu t) mass(0) for both species at every sample.

    ``max_violation`` is the largest relative excess over the bound (<= 0 when satisfied).
    """
    t = record.column("t")
    t0 = t[0] if t.size else 0.0
    worst = -math.inf
    bad = []
    for name, mu in (("mass_u", p.mu1), ("mass_v", p.mu2)):
        m = record.column(name)
        if m.size == 0:
            continue
        bound = np.exp(mu * (t - t0)) * m[0]
        scale = np.maximum(bound, np.finfo(float).tiny)
        rel = np.where(bound > 0, (m - bound) / scale, np.where(m > 0, np.inf, 0.0))
        worst = max(worst, float(np.max(rel)))
        for i in np.flatnonzero(rel > rtol):
            bad.append({"species": name, "t": float(t[i]), "mass": float(m[i]), "bound": float(bound[i])})
    if worst == -math.inf:
        worst = 0.0
    return MassAudit(ok=not bad, max_violation=worst, violations=bad)
