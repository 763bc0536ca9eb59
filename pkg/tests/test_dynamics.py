import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from chemocomp.dynamics import (
    StepCollapse,
    StepControl,
    fit_blowup,
    make_state,
    mass_audit,
    run,
    step,
)
from chemocomp.grid import RadialGrid, mass
from chemocomp.model import ModelParams
from chemocomp.records import Cause, Sample, Termination, RunRecord


def const_state(p, g, a, b):
    return make_state(p, g.field(np.full(g.m, a)), g.field(np.full(g.m, b)))


def test_zero_data_stays_zero():
    g = RadialGrid.uniform(3, 1.0, 20)
    p = ModelParams(chi1=5.0, chi2=5.0)
    rec = run(p, const_state(p, g, 0.0, 0.0), StepControl(t_end=0.1))
    assert rec.termination.cause is Cause.REACHED_T_END
    assert rec.termination.t == 0.1
    assert np.all(np.array(rec.final["u"]) == 0) and np.all(np.array(rec.final["v"]) == 0)


def test_constant_state_is_one_euler_step():
    g = RadialGrid.uniform(3, 1.0, 16)
    p = ModelParams(mu1=0.7, mu2=1.3, a1=0.4, a2=0.9, kappa1=2.5, lambda2=1.5)
    a, b = 0.3, 0.6
    s = step(p, const_state(p, g, a, b), StepControl(t_end=1.0, dt_max=1e-2))
    dt = s.dt_last
    ua = a + dt * p.mu1 * a * (1 - a ** (p.kappa1 - 1) - p.a1 * b ** (p.lambda1 - 1))
    vb = b + dt * p.mu2 * b * (1 - b ** (p.kappa2 - 1) - p.a2 * a ** (p.lambda2 - 1))
    np.testing.assert_allclose(s.u.values, ua, rtol=1e-12)
    np.testing.assert_allclose(s.v.values, vb, rtol=1e-12)


def test_carrying_capacity_is_fixed():
    g = RadialGrid.uniform(5, 1.0, 16)
    p = ModelParams(n=5, h_kind="jl", chi1=10.0)
    rec = run(p, const_state(p, g, 1.0, 0.0), StepControl(t_end=0.5))
    np.testing.assert_allclose(rec.final["u"], 1.0, rtol=1e-13)


def test_logistic_ode_first_order_convergence():
    g = RadialGrid.uniform(3, 1.0, 4)
    p = ModelParams(mu1=2.0, mu2=1.0, a1=0.5, a2=0.5)
    ref = solve_ivp(
        lambda t, y: [p.mu1 * y[0] * (1 - y[0] - p.a1 * y[1]), p.mu2 * y[1] * (1 - y[1] - p.a2 * y[0])],
        (0, 1.0), [0.1, 0.2], rtol=1e-12, atol=1e-14,
    ).y[:, -1]
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        rec = run(p, const_state(p, g, 0.1, 0.2), StepControl(t_end=1.0, dt_max=dt))
        errs.append(max(abs(rec.final["u"][0] - ref[0]), abs(rec.final["v"][0] - ref[1])))
    assert 1.8 < errs[0] / errs[1] < 2.2
    assert 1.8 < errs[1] / errs[2] < 2.2


def neumann_mode_n3():
    """First positive root of tan k = k: sin(kr)/(kr) then has zero slope at r = 1."""
    return brentq(lambda k: math.tan(k) - k, 4.4, 4.5)


@pytest.mark.parametrize("theta", [1.0, 0.5])
def test_heat_mode_decay(theta):
    k = neumann_mode_n3()
    g = RadialGrid.uniform(3, 1.0, 200)
    d, eps, T = 0.8, 0.1, 0.02
    p = ModelParams(d1=d, d2=d, chi1=1e-12, chi2=1e-12, mu1=1e-12, mu2=1e-12)
    a, b = g.face_radii[:-1], g.face_radii[1:]
    # exact shell average of sin(kr)/(kr)
    prim = lambda r: (np.sin(k * r) - k * r * np.cos(k * r)) / k**3  # noqa: E731
    mode = (prim(b) - prim(a)) / k / ((b**3 - a**3) / 3)
    u0 = g.field(1.0 + eps * mode)
    rec = run(p, make_state(p, u0, g.zeros()), StepControl(t_end=T, dt_max=2e-5, diffusion_theta=theta))
    got = (np.array(rec.final["u"]) - 1.0) / (eps * mode)
    assert np.median(got) == pytest.approx(math.exp(-d * k * k * T), rel=2e-3)


fields = arrays(np.float64, 24, elements=st.floats(0.0, 20.0, allow_nan=False))


@settings(max_examples=40, deadline=None)
@given(fields, fields, st.sampled_from(["ks", "jl"]), st.floats(0.1, 30.0), st.floats(0.5, 1.0))
def test_positivity_preserved(a, b, kind, chi, theta):
    n = 5 if kind == "jl" else 3
    g = RadialGrid.uniform(n, 1.0, a.size)
    p = ModelParams(n=n, h_kind=kind, chi1=chi, chi2=chi / 2)
    s = make_state(p, g.field(a), g.field(b))
    c = StepControl(t_end=1.0, diffusion_theta=theta)
    for _ in range(5):
        s = step(p, s, c)
        assert np.all(s.u.values >= 0) and np.all(s.v.values >= 0)


@settings(max_examples=30, deadline=None)
@given(fields, fields)
def test_maximum_principle_without_taxis(a, b):
    a = np.sort(a)[::-1]
    b = np.sort(b)[::-1]
    g = RadialGrid.uniform(3, 1.0, a.size)
    p = ModelParams(chi1=1e-14, chi2=1e-14)
    rec = run(p, make_state(p, g.field(a), g.field(b)), StepControl(t_end=0.05))
    sup_u = rec.column("sup_u")
    sup_v = rec.column("sup_v")
    assert np.all(sup_u <= max(1.0, a[0]) + 1e-6)
    assert np.all(sup_v <= max(1.0, b[0]) + 1e-6)


def test_mass_audit_logistic_growth():
    g = RadialGrid.uniform(3, 1.0, 30)
    p = ModelParams(chi1=1.0, chi2=1.0)
    u0 = g.sample(lambda r: 0.3 + 0.2 * np.cos(np.pi * r))
    rec = run(p, make_state(p, u0, g.field(np.full(g.m, 0.1))), StepControl(t_end=1.0))
    audit = mass_audit(rec, p)
    assert audit.ok and audit.max_violation <= 0
    assert rec.column("mass_u")[-1] > rec.column("mass_u")[0]


def test_mass_audit_equality_at_start():
    audit = mass_audit(fake_record([0.0], [2.0]), ModelParams())
    assert audit.ok and audit.max_violation == 0.0


def fake_record(times, masses):
    samples = [Sample(t, i, 0.0, m, m, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0) for i, (t, m) in enumerate(zip(times, masses))]
    return RunRecord(samples=samples, termination=Termination(Cause.REACHED_T_END, times[-1]))


def test_mass_audit_flags_violation():
    p = ModelParams(mu1=1.0, mu2=1.0)
    rec = fake_record([0.0, 1.0, 2.0], [1.0, math.e, 1.5 * math.e**2])
    audit = mass_audit(rec, p)
    assert not audit.ok
    assert audit.max_violation == pytest.approx(0.5, rel=1e-12)
    assert {v["t"] for v in audit.violations} == {2.0}
    exact = mass_audit(fake_record([0.0, 1.0], [1.0, math.e]), p)
    assert exact.ok


def test_fit_recovers_power_law():
    T, q = 0.3, 1.0
    t = T - np.geomspace(0.1, 1e-5, 30)
    fT, fq = fit_blowup(t, 2.0 * (T - t) ** -q)
    assert fT == pytest.approx(T, rel=1e-6)
    assert fq == pytest.approx(q, rel=1e-4)
    fT, fq = fit_blowup(t, 0.5 * (T - t) ** -2.5)
    assert fq == pytest.approx(2.5, rel=1e-4)


def test_fit_needs_three_points():
    assert fit_blowup([0.0, 1.0], [1.0, 2.0]) == (None, None)


def test_step_budget_ends_run():
    g = RadialGrid.uniform(3, 1.0, 20)
    p = ModelParams()
    rec = run(p, const_state(p, g, 0.5, 0.5), StepControl(t_end=1.0, dt_max=1e-3, max_steps=7))
    assert rec.termination.cause is Cause.STEP_COLLAPSE
    assert "step budget" in rec.termination.message
    assert rec.samples[-1].step == 7


def test_step_collapse_raised():
    g = RadialGrid.uniform(3, 1.0, 20)
    p = ModelParams(mu1=1e9)
    with pytest.raises(StepCollapse):
        step(p, const_state(p, g, 0.5, 0.5), StepControl(t_end=1.0, dt_min=1e-6))


def test_threshold_termination_and_fit():
    g = RadialGrid.uniform(3, 1.0, 10)
    p = ModelParams(kappa1=1.5, kappa2=1.5, mu1=1.0)
    rec = run(p, const_state(p, g, 0.5, 0.5), StepControl(t_end=1.0, blowup_threshold=0.9))
    assert rec.termination.cause is Cause.BLOWUP_THRESHOLD
    assert rec.samples[-1].sup >= 0.9


def test_stride_samples():
    g = RadialGrid.uniform(3, 1.0, 10)
    p = ModelParams()
    rec = run(p, const_state(p, g, 0.5, 0.5), StepControl(t_end=0.1, dt_max=1e-2), stride=3)
    steps = [s.step for s in rec.samples]
    assert steps == [0, 3, 6, 9, 10]
    with pytest.raises(ValueError):
        run(p, const_state(p, g, 0.5, 0.5), StepControl(), stride=0)


def test_make_state_rejects_negative():
    g = RadialGrid.uniform(3, 1.0, 4)
    with pytest.raises(ValueError):
        make_state(ModelParams(), g.field([1, -1, 0, 0]), g.zeros())


def test_step_control_validation():
    with pytest.raises(ValueError):
        StepControl(diffusion_theta=1.5)
    with pytest.raises(ValueError):
        StepControl(t_end=-1.0)


def test_mass_conserved_without_reaction_growth():
    # tiny mu: advection and diffusion are conservative, so mass is flat to round-off
    g = RadialGrid.uniform(3, 1.0, 50)
    p = ModelParams(chi1=5.0, chi2=5.0, mu1=1e-14, mu2=1e-14)
    u0 = g.sample(lambda r: 1 + np.cos(np.pi * r))
    rec = run(p, make_state(p, u0, u0), StepControl(t_end=0.05))
    m = rec.column("mass_u")
    assert np.max(np.abs(m - m[0])) <= 1e-11 * m[0]
    assert mass(u0) == pytest.approx(m[0])
