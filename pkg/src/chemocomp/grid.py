"""Cell-centred radial meshes on (0, R) and the mass accumulation transform.

Everything is expressed through shell volumes, so a cell-constant field is
integrated exactly.  The accumulated mass

    U(s) = int_0^{s^(1/n)} rho^(n-1) f(rho) drho,    s = r^n,

of a cell-constant field is *exactly* piecewise linear in s with slope f/n
on each cell, which is what makes the moment functionals in
:mod:`chemocomp.functionals` computable in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RadialGrid",
    "RadialField",
    "Accumulated",
    "unit_ball_volume",
    "sphere_area",
    "mass",
    "mass_within",
    "accumulate",
    "slope",
    "lp_norm",
]


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def sphere_area(n: int) -> float:
    """omega_n = n |B_1|, the area of the unit sphere in R^n."""
    return n * unit_ball_volume(n)


class RadialGrid:
    """Radial mesh with faces ``0 = r_0 < r_1 < ... < r_m = R``.

    Parameters
    ----------
    n : int
        Spatial dimension.
    face_radii : array_like
        Strictly increasing face radii starting at 0.

    Use :meth:`uniform` or :meth:`geometric` rather than building face
    arrays by hand.
    """

    def __init__(self, n: int, face_radii):
        faces = np.array(face_radii, dtype=float)
        if faces.ndim != 1 or faces.size < 2:
            raise ValueError("need at least one cell")
        if faces[0] != 0.0:
            raise ValueError("first face must sit at r = 0")
        if not np.all(np.diff(faces) > 0):
            raise ValueError("face radii must be strictly increasing")
        if int(n) != n or n < 1:
            raise ValueError(f"bad dimension {n!r}")
        self.n = int(n)
        self.R = float(faces[-1])
        self.m = faces.size - 1
        self.face_radii = faces
        self.cell_centers = 0.5 * (faces[1:] + faces[:-1])
        self.omega = sphere_area(self.n)
        # s = r^n at the faces; shell volumes are omega/n * (s_{i+1} - s_i)
        self.s_faces = faces ** self.n
        self.shell_volumes = self.omega / self.n * np.diff(self.s_faces)
        self.face_areas = self.omega * faces ** (self.n - 1)
        # centre-to-centre spacing seen by face k (k = 1..m-1)
        self.center_gaps = np.diff(self.cell_centers)
        for arr in (self.face_radii, self.cell_centers, self.s_faces, self.shell_volumes, self.face_areas):
            arr.setflags(write=False)

    @classmethod
    def uniform(cls, n: int, R: float, m: int) -> "RadialGrid":
        return cls(n, np.linspace(0.0, R, m + 1))

    @classmethod
    def geometric(cls, n: int, R: float, m: int, ratio: float = 1.02) -> "RadialGrid":
        """Faces with widths growing by ``ratio`` from the origin outwards."""
        if ratio <= 0:
            raise ValueError("ratio must be positive")
        if ratio == 1.0:
            return cls.uniform(n, R, m)
        widths = ratio ** np.arange(m)
        faces = np.concatenate(([0.0], np.cumsum(widths)))
        faces *= R / faces[-1]
        faces[-1] = R
        return cls(n, faces)

    @property
    def ball_volume(self) -> float:
        return unit_ball_volume(self.n) * self.R**self.n

    def field(self, values) -> "RadialField":
        return RadialField(np.asarray(values, dtype=float), self)

    def zeros(self) -> "RadialField":
        return self.field(np.zeros(self.m))

    def sample(self, func) -> "RadialField":
        """Field with values ``func(r)`` at the cell centres."""
        return self.field(np.asarray(func(self.cell_centers), dtype=float) * np.ones(self.m))

    def same_as(self, other: "RadialGrid") -> bool:
        return self is other or (
            self.n == other.n and self.m == other.m and np.array_equal(self.face_radii, other.face_radii)
        )

    def __repr__(self) -> str:
        return f"RadialGrid(n={self.n}, R={self.R}, m={self.m})"


@dataclass(frozen=True)
class RadialField:
    """Cell averages of a radial function on ``grid``."""

    values: np.ndarray
    grid: RadialGrid

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.m,):
            raise ValueError(f"expected {self.grid.m} cell values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.grid.m


def mass(f: RadialField) -> float:
    """Integral of ``f`` over the ball."""
    return float(np.dot(f.values, f.grid.shell_volumes))


def mass_within(f: RadialField, radius: float) -> float:
    """Integral of ``f`` over B_radius, cutting the straddling shell exactly."""
    g = f.grid
    s_cut = min(max(radius, 0.0), g.R) ** g.n
    overlap = np.clip(s_cut - g.s_faces[:-1], 0.0, np.diff(g.s_faces))
    return float(np.dot(f.values, g.omega / g.n * overlap))


def lp_norm(f: RadialField, p: float) -> float:
    if p == math.inf:
        return float(np.max(np.abs(f.values)))
    return float(np.dot(np.abs(f.values) ** p, f.grid.shell_volumes) ** (1.0 / p))


@dataclass(frozen=True)
class Accumulated:
    """Piecewise-linear function of s with nodes at the face values s_k = r_k^n."""

    s_nodes: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    n: int

    @classmethod
    def from_slopes(cls, s_nodes, slopes, n: int) -> "Accumulated":
        """Build U with U(0) = 0 from per-cell slopes."""
        s_nodes = np.asarray(s_nodes, dtype=float)
        slopes = np.asarray(slopes, dtype=float)
        values = np.concatenate(([0.0], np.cumsum(slopes * np.diff(s_nodes))))
        return cls(s_nodes, values, slopes, n)

    @property
    def s_max(self) -> float:
        return float(self.s_nodes[-1])

    def __call__(self, s):
        return np.interp(s, self.s_nodes, self.values)


def accumulate(f: RadialField) -> Accumulated:
    g = f.grid
    return Accumulated.from_slopes(g.s_faces, f.values / g.n, g.n)


def slope(U: Accumulated, s: float) -> float:
    """U_s at ``s``; at a node the two one-sided slopes are averaged."""
    if not (0.0 < s < U.s_max):
        raise ValueError(f"s = {s!r} outside (0, {U.s_max!r})")
    slopes = U.slopes
    k = int(np.searchsorted(U.s_nodes, s, side="left"))
    if U.s_nodes[k] == s:
        return float(0.5 * (slopes[k - 1] + slopes[k]))
    return float(slopes[k - 1])
