"""Signal equation ``0 = d3 Lap w + alpha u + beta v - h`` on a radial mesh.

Finite-volume form on cell i (V_i shell volume, A_k face area, h_k centre
gap across face k)::

    d3 (A_{i+1} (w_{i+1}-w_i)/h_{i+1} - A_i (w_i-w_{i-1})/h_i) + V_i (alpha u_i + beta v_i - h_i) = 0

with A_0 = 0 at the origin and zero flux through r = R.  The resulting
matrix is symmetric and tridiagonal.  For the Jaeger-Luckhaus variant the
operator is singular (constants span the kernel); the right-hand side is
projected to zero total, one unknown is pinned and the solution is shifted
to volume mean zero afterwards.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .grid import RadialField, RadialGrid, accumulate
from .model import ModelParams

__all__ = ["EllipticSolveError", "solve_w", "flux_wr", "residual_w", "source", "face_transmissibility"]


class EllipticSolveError(RuntimeError):
    pass


def face_transmissibility(g: RadialGrid, coeff: float) -> np.ndarray:
    """coeff * A_k / h_k for the interior faces k = 1..m-1."""
    return coeff * g.face_areas[1:-1] / g.center_gaps


def source(p: ModelParams, u: RadialField, v: RadialField) -> np.ndarray:
    return p.alpha * u.values + p.beta * v.values


def _mean_production(p: ModelParams, g: RadialGrid, prod: np.ndarray) -> float:
    return float(np.dot(prod, g.shell_volumes) / np.sum(g.shell_volumes))


def _solve_spd_tridiagonal(diag: np.ndarray, off: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if diag.size == 1:
        return rhs / diag
    ab = np.zeros((2, diag.size))
    ab[0, 1:] = off
    ab[1, :] = diag
    try:
        x = scipy.linalg.solveh_banded(ab, rhs, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise EllipticSolveError(f"tridiagonal factorisation failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise EllipticSolveError("tridiagonal solve produced non-finite values")
    return x


def solve_w(p: ModelParams, g: RadialGrid, u: RadialField, v: RadialField) -> RadialField:
    """Solve the signal equation for the given densities.

    Keller-Segel: SPD system with reaction ``gamma V_i`` on the diagonal.
    Jaeger-Luckhaus: zero-mean solution of the singular Neumann problem.
    """
    prod = source(p, u, v)
    T = face_transmissibility(g, p.d3)
    V = g.shell_volumes
    diag = np.zeros(g.m)
    diag[:-1] += T
    diag[1:] += T
    off = -T
    if not p.is_jl:
        diag = diag + p.gamma * V
        w = _solve_spd_tridiagonal(diag, off, V * prod)
        return g.field(w)

    rhs = V * (prod - _mean_production(p, g, prod))
    rhs -= V * (rhs.sum() / V.sum())
    w = np.zeros(g.m)
    if g.m > 1:
        # pin the outermost cell; its equation is implied by the others
        w[:-1] = _solve_spd_tridiagonal(diag[:-1], off[:-1], rhs[:-1])
    w -= np.dot(w, V) / V.sum()
    return g.field(w)


def _divergence_term(g: RadialGrid, d3: float, w: np.ndarray) -> np.ndarray:
    """d3 r^{1-n}(r^{n-1} w_r)_r as a cell average."""
    T = face_transmissibility(g, d3)
    flux = np.zeros(g.m + 1)
    flux[1:-1] = T * np.diff(w)
    return np.diff(flux) / g.shell_volumes


def residual_w(p: ModelParams, g: RadialGrid, u: RadialField, v: RadialField, w: RadialField) -> float:
    """Max-norm residual of the discrete signal equation."""
    prod = source(p, u, v)
    h = p.gamma * w.values if not p.is_jl else _mean_production(p, g, prod)
    res = _divergence_term(g, p.d3, w.values) + prod - h
    return float(np.max(np.abs(res))) if res.size else 0.0


def flux_wr(p: ModelParams, g: RadialGrid, u: RadialField, v: RadialField, w: RadialField) -> np.ndarray:
    """w_r at the m+1 faces from the integrated signal equation.

    Uses the accumulated masses U, V (and W for Keller-Segel) in

        s^{1-1/n} w_r = -(alpha/d3) U - (beta/d3) V + (gamma/d3) W          (KS)
        s^{1-1/n} w_r = -(alpha/d3) U - (beta/d3) V + Mbar s / (d3 n)       (JL)

    rather than differencing ``w``.  The value at r = 0 is 0 by symmetry.
    """
    U = accumulate(u).values
    Vacc = accumulate(v).values
    s = g.s_faces
    if p.is_jl:
        mbar = _mean_production(p, g, source(p, u, v))
        rhs = (-p.alpha * U - p.beta * Vacc + mbar * s / g.n) / p.d3
    else:
        W = accumulate(w).values
        rhs = (-p.alpha * U - p.beta * Vacc + p.gamma * W) / p.d3
    wr = np.zeros(g.m + 1)
    r = g.face_radii[1:]
    wr[1:] = rhs[1:] / r ** (g.n - 1)
    return wr
