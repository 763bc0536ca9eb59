import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chemocomp.grid import RadialGrid, accumulate, lp_norm, mass, mass_within, slope


def test_shell_volumes_sum_to_ball():
    for n in (2, 3, 5, 7):
        for g in (RadialGrid.uniform(n, 1.3, 57), RadialGrid.geometric(n, 1.3, 57, 1.05)):
            assert g.shell_volumes.sum() == pytest.approx(g.ball_volume, rel=1e-12)
            assert np.all(g.shell_volumes > 0)


def test_geometric_refines_origin():
    g = RadialGrid.geometric(3, 1.0, 40, 1.1)
    w = np.diff(g.face_radii)
    assert np.all(np.diff(w) > 0)
    assert g.face_radii[-1] == 1.0


def test_bad_faces_rejected():
    with pytest.raises(ValueError):
        RadialGrid(3, [0.0, 0.5, 0.5, 1.0])
    with pytest.raises(ValueError):
        RadialGrid(3, [0.1, 1.0])


def test_field_rejects_nonfinite_and_bad_shape():
    g = RadialGrid.uniform(3, 1.0, 4)
    with pytest.raises(ValueError):
        g.field([0, 1, np.nan, 2])
    with pytest.raises(ValueError):
        g.field([0, 1, 2])


def test_mass_of_one_is_ball_volume():
    g = RadialGrid.uniform(3, 1.0, 100)
    assert mass(g.field(np.ones(g.m))) == pytest.approx(4 * math.pi / 3, rel=1e-13)
    assert mass(g.zeros()) == 0.0


def test_mass_of_r_with_exact_cell_averages():
    g = RadialGrid.uniform(3, 1.0, 37)
    a, b = g.face_radii[:-1], g.face_radii[1:]
    avg = (b**4 - a**4) / 4 / ((b**3 - a**3) / 3)
    assert mass(g.field(avg)) == pytest.approx(math.pi, rel=1e-13)


def test_mass_within_cuts_shell_exactly():
    g = RadialGrid.uniform(3, 1.0, 10)
    f = g.field(np.ones(g.m))
    for r in (0.0, 0.05, 0.37, 0.5, 1.0, 2.0):
        rr = min(r, 1.0)
        assert mass_within(f, r) == pytest.approx(4 * math.pi / 3 * rr**3, rel=1e-13, abs=1e-15)


def test_lp_norms():
    g = RadialGrid.uniform(3, 1.0, 20)
    f = g.field(np.full(g.m, 2.0))
    assert lp_norm(f, 1) == pytest.approx(2 * g.ball_volume, rel=1e-13)
    assert lp_norm(f, 2) == pytest.approx(2 * math.sqrt(g.ball_volume), rel=1e-13)
    assert lp_norm(f, math.inf) == 2.0


def test_accumulate_constant():
    g = RadialGrid.uniform(3, 2.0, 16)
    U = accumulate(g.field(np.full(g.m, 3.0)))
    assert U(0.0) == 0.0
    assert U(8.0) == pytest.approx(8.0, rel=1e-14)
    s = np.linspace(0, 8, 31)
    np.testing.assert_allclose(U(s), 3.0 * s / 3, rtol=1e-14, atol=1e-15)
    assert np.all(accumulate(g.zeros()).values == 0)


def test_slope_constant_and_tie_rule():
    g = RadialGrid.uniform(3, 1.0, 8)
    U = accumulate(g.field(np.full(g.m, 3.0)))
    assert slope(U, 0.3) == pytest.approx(1.0, rel=1e-15)
    f = g.field(np.arange(1.0, 9.0))
    U = accumulate(f)
    k = 3
    assert slope(U, g.s_faces[k]) == pytest.approx(0.5 * (f.values[k - 1] + f.values[k]) / 3, rel=1e-15)
    with pytest.raises(ValueError):
        slope(U, 0.0)
    with pytest.raises(ValueError):
        slope(U, 1.5)


positive_fields = arrays(np.float64, st.integers(2, 40), elements=st.floats(0.0, 1e3, allow_nan=False))


@settings(max_examples=100, deadline=None)
@given(positive_fields, st.sampled_from([2, 3, 5]))
def test_mass_matches_accumulated_total(vals, n):
    g = RadialGrid.uniform(n, 1.0, vals.size)
    f = g.field(vals)
    U = accumulate(f)
    assert g.omega * U(g.R**n) == pytest.approx(mass(f), rel=1e-12, abs=1e-300)
    assert np.all(np.diff(U.values) >= 0)


@settings(max_examples=100, deadline=None)
@given(positive_fields)
def test_slope_round_trip(vals):
    g = RadialGrid.geometric(3, 1.0, vals.size, 1.07)
    U = accumulate(g.field(vals))
    mids = 0.5 * (g.s_faces[1:] + g.s_faces[:-1])
    rebuilt = np.concatenate(([0.0], np.cumsum([slope(U, s) for s in mids] * np.diff(g.s_faces))))
    np.testing.assert_allclose(rebuilt, U.values, rtol=1e-12, atol=1e-300)
    # finite differences of U inside a cell equal the slope
    for i, s in enumerate(mids):
        h = 1e-3 * (g.s_faces[i + 1] - g.s_faces[i])
        fd = (U(s + h) - U(s - h)) / (2 * h)
        assert fd == pytest.approx(vals[i] / 3, rel=1e-6, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(positive_fields)
def test_nonincreasing_field_gives_concave_U(vals):
    vals = np.sort(vals)[::-1]
    g = RadialGrid.uniform(4, 1.0, vals.size)
    U = accumulate(g.field(vals))
    assert np.all(np.diff(U.slopes) <= 0)
