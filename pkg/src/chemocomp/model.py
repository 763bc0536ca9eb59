"""System parameters and executable regime hypotheses.

The two-species system on the ball B_R in R^n reads

    u_t = d1 Lap u - chi1 div(u grad w) + mu1 u (1 - u^(kappa1-1) - a1 v^(lambda1-1))
    v_t = d2 Lap v - chi2 div(v grad w) + mu2 v (1 - a2 u^(lambda2-1) - v^(kappa2-1))
    0   = d3 Lap w + alpha u + beta v - h(u, v, w)

with homogeneous Neumann data and either the Keller-Segel signal decay
``h = gamma w`` or the Jaeger-Luckhaus mean ``h = |Omega|^-1 int(alpha u + beta v)``
(the latter normalised by ``int w = 0``).

Threshold comparisons are carried out in exact rational arithmetic
(:class:`fractions.Fraction` built from the binary floats) so that the
boundedness predicate and the L^p-exponent feasibility test can never
disagree through rounding.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from typing import Optional

__all__ = [
    "HKind",
    "Species",
    "Verdict",
    "ModelParams",
    "Condition",
    "RegimePrediction",
    "chi_threshold_bounded",
    "classify_regime",
    "select_lp_exponent",
    "ks_exponent_bound",
    "mu_condition",
]


class HKind(str, enum.Enum):
    KELLER_SEGEL = "ks"
    JAEGER_LUCKHAUS = "jl"


class Species(str, enum.Enum):
    FIRST = "first"
    SECOND = "second"


class Verdict(str, enum.Enum):
    BOUNDED = "Bounded"
    KS_BLOWUP = "KSBlowupEligible"
    JL_BLOWUP = "JLBlowupEligible"
    UNCLASSIFIED = "Unclassified"


_POSITIVE = ("d1", "d2", "d3", "chi1", "chi2", "mu1", "mu2", "a1", "a2", "alpha", "beta", "R")
_EXPONENTS = ("kappa1", "kappa2", "lambda1", "lambda2")


@dataclass(frozen=True)
class ModelParams:
    """Coefficients, exponents and geometry of the system.

    ``gamma`` is only used when ``h_kind`` is Keller-Segel.
    """

    d1: float = 1.0
    d2: float = 1.0
    d3: float = 1.0
    chi1: float = 1.0
    chi2: float = 1.0
    mu1: float = 1.0
    mu2: float = 1.0
    a1: float = 1.0
    a2: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    kappa1: float = 2.0
    kappa2: float = 2.0
    lambda1: float = 2.0
    lambda2: float = 2.0
    n: int = 3
    R: float = 1.0
    h_kind: HKind = HKind.KELLER_SEGEL
    gamma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "h_kind", HKind(self.h_kind))
        for name in _POSITIVE:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a finite positive number, got {value!r}")
        for name in _EXPONENTS:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 1):
                raise ValueError(f"{name} must satisfy {name} > 1, got {value!r}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if self.h_kind is HKind.KELLER_SEGEL and not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive for Keller-Segel signal decay, got {self.gamma!r}")

    @property
    def is_jl(self) -> bool:
        return self.h_kind is HKind.JAEGER_LUCKHAUS

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["h_kind"] = self.h_kind.value
        return out

    def species(self, which: Species):
        """Return ``(chi, mu, a, kappa, lambda, own_prod, other_prod)`` for one species.

        ``own_prod`` is the signal production rate of the species itself
        (alpha for u, beta for v).
        """
        which = Species(which)
        if which is Species.FIRST:
            return self.chi1, self.mu1, self.a1, self.kappa1, self.lambda1, self.alpha, self.beta
        return self.chi2, self.mu2, self.a2, self.kappa2, self.lambda2, self.beta, self.alpha


@dataclass(frozen=True)
class Condition:
    name: str
    satisfied: bool
    threshold: float


@dataclass(frozen=True)
class RegimePrediction:
    verdict: Verdict
    details: list = field(default_factory=list)

    def detail(self, name: str) -> Condition:
        for cond in self.details:
            if cond.name == name:
                return cond
        raise KeyError(name)


def _q(x) -> Fraction:
    return Fraction(x)


def _is_two(x: float) -> bool:
    return x == 2.0


def _dimension_factor(n: int, shift: int) -> Optional[Fraction]:
    """n/(n-shift) as a rational, ``None`` for the pole (read as +inf)."""
    if n - shift <= 0:
        return None
    return Fraction(n, n - shift)


def _bounded_bound_exact(p: ModelParams, which: Species):
    """Exact right-hand side of the boundedness condition on chi.

    Returns ``None`` for +inf and ``Fraction(0)`` when the exponents fall
    outside the four covered cases (kappa < 2 or lambda < 2), so that no
    positive chi qualifies.
    """
    _, mu, a, kappa, lam, own, other = p.species(which)
    if kappa < 2 or lam < 2:
        return Fraction(0)
    if kappa > 2 and lam > 2:
        return None
    candidates = []
    if _is_two(kappa):
        candidates.append(_q(p.d3) * _q(mu) / _q(own))
    if _is_two(lam):
        candidates.append(_q(a) * _q(p.d3) * _q(mu) / _q(other))
    factor = _dimension_factor(p.n, 2)
    if factor is None:
        return None
    return min(candidates) * factor


def chi_threshold_bounded(p: ModelParams, species: Species) -> float:
    """Upper bound on chi below which the species satisfies the boundedness condition.

    Returns ``math.inf`` when no restriction applies (both exponents above
    2, or n = 2 where the dimensional factor n/(n-2) has a pole) and ``0.0``
    for exponent combinations the boundedness result does not cover.
    """
    bound = _bounded_bound_exact(p, species)
    return math.inf if bound is None else float(bound)


def _chi_passes_bounded(p: ModelParams, which: Species) -> bool:
    chi = p.species(which)[0]
    bound = _bounded_bound_exact(p, which)
    return bound is None or _q(chi) < bound


def select_lp_exponent(p: ModelParams, species: Species) -> Optional[float]:
    """Pick an integrability exponent p > n/2 for the L^p energy estimate.

    With x = (p-1)/p the active constraints are

        kappa = 2:   mu - x alpha chi / d3 > 0
        lambda = 2:  a mu - x beta chi / d3 > 0

    and p > n/2 means x > (n-2)/n.  The feasible set in p is an interval
    (n/2, p_max); its midpoint is returned when p_max is finite, n/2 + 1
    otherwise, and ``None`` when it is empty.  Exponent cases outside
    kappa, lambda >= 2 are treated as infeasible.
    """
    chi, mu, a, kappa, lam, own, other = p.species(species)
    half_n = Fraction(p.n, 2)
    if kappa < 2 or lam < 2:
        return None
    caps = []
    if _is_two(kappa):
        caps.append(_q(p.d3) * _q(mu) / (_q(own) * _q(chi)))
    if _is_two(lam):
        caps.append(_q(a) * _q(p.d3) * _q(mu) / (_q(other) * _q(chi)))
    if not caps:
        return float(half_n + 1)
    x_cap = min(caps)
    x_low = Fraction(p.n - 2, p.n)
    if x_cap <= x_low:
        return None
    if x_cap >= 1:
        return float(half_n + 1)
    p_max = 1 / (1 - x_cap)
    return float((half_n + p_max) / 2)


def ks_exponent_bound(n: int) -> Optional[Fraction]:
    """Strict upper bound on max exponent for Keller-Segel blow-up; ``None`` if n < 3."""
    if n < 3:
        return None
    if n in (3, 4):
        return Fraction(7, 6)
    return 1 + Fraction(1, 2 * (n - 1))


def mu_condition(p: ModelParams) -> tuple[bool, bool]:
    """Per-species check of mu1 < beta chi1/(a1 d3), mu2 < alpha chi2/(a2 d3)."""
    first = _q(p.mu1) < _q(p.beta) * _q(p.chi1) / (_q(p.a1) * _q(p.d3))
    second = _q(p.mu2) < _q(p.alpha) * _q(p.chi2) / (_q(p.a2) * _q(p.d3))
    return first, second


def _jl_strong_bound(p: ModelParams, which: Species) -> Optional[Fraction]:
    """Lower bound on chi of the 'dominant' species in the JL blow-up alternative."""
    _, mu, a, kappa, _, own, other = p.species(which)
    factor = _dimension_factor(p.n, 4)
    if factor is None:
        return None
    cross = _q(a) * _q(p.d3) * _q(mu) / _q(other)
    if _is_two(kappa):
        return max(_q(p.d3) * _q(mu) / _q(own), cross) * factor
    return cross * factor


def _jl_weak_bound(p: ModelParams, which: Species) -> Fraction:
    _, mu, a, _, _, _, other = p.species(which)
    return _q(a) * _q(p.d3) * _q(mu) / _q(other)


def classify_regime(p: ModelParams) -> RegimePrediction:
    """Evaluate every regime hypothesis and report the first that applies.

    Priority is boundedness, then Keller-Segel blow-up, then
    Jaeger-Luckhaus blow-up; parameters outside all three are
    ``Unclassified``.
    """
    details: list[Condition] = []

    bdd = []
    for which, label in ((Species.FIRST, "chi1"), (Species.SECOND, "chi2")):
        ok = _chi_passes_bounded(p, which)
        bdd.append(ok)
        details.append(Condition(f"bounded:{label}<threshold", ok, chi_threshold_bounded(p, which)))
    bounded = all(bdd)

    # Keller-Segel blow-up
    max_exp = max(p.kappa1, p.kappa2, p.lambda1, p.lambda2)
    exp_bound = ks_exponent_bound(p.n)
    ks_h = p.h_kind is HKind.KELLER_SEGEL
    details.append(Condition("ks:h=gamma*w", ks_h, math.nan))
    details.append(Condition("ks:n>=3", p.n >= 3, 3.0))
    ks_exp = exp_bound is not None and _q(max_exp) < exp_bound
    details.append(
        Condition("ks:max_exponent<bound", ks_exp, math.nan if exp_bound is None else float(exp_bound))
    )
    ks_ok = ks_h and p.n >= 3 and ks_exp

    # Jaeger-Luckhaus blow-up
    jl_h = p.is_jl
    details.append(Condition("jl:h=mean", jl_h, math.nan))
    details.append(Condition("jl:n>=5", p.n >= 5, 5.0))
    lam_ok = _is_two(p.lambda1) and _is_two(p.lambda2)
    details.append(Condition("jl:lambda1=lambda2=2", lam_ok, 2.0))
    kap_ok = 1 < p.kappa1 <= 2 and 1 < p.kappa2 <= 2
    details.append(Condition("jl:kappa_in_(1,2]", kap_ok, 2.0))

    alternatives = []
    for strong, weak, tag in (
        (Species.FIRST, Species.SECOND, "A"),
        (Species.SECOND, Species.FIRST, "B"),
    ):
        strong_bound = _jl_strong_bound(p, strong)
        weak_bound = _jl_weak_bound(p, weak)
        chi_s = p.species(strong)[0]
        chi_w = p.species(weak)[0]
        s_ok = strong_bound is not None and _q(chi_s) > strong_bound
        w_ok = _q(chi_w) > weak_bound
        s_name = "chi1" if strong is Species.FIRST else "chi2"
        w_name = "chi2" if strong is Species.FIRST else "chi1"
        details.append(
            Condition(
                f"jl{tag}:{s_name}>bound",
                s_ok,
                math.inf if strong_bound is None else float(strong_bound),
            )
        )
        details.append(Condition(f"jl{tag}:{w_name}>bound", w_ok, float(weak_bound)))
        alternatives.append(s_ok and w_ok)
    mu1_ok, mu2_ok = mu_condition(p)
    details.append(Condition("jl:mu1<beta*chi1/(a1*d3)", mu1_ok, p.beta * p.chi1 / (p.a1 * p.d3)))
    details.append(Condition("jl:mu2<alpha*chi2/(a2*d3)", mu2_ok, p.alpha * p.chi2 / (p.a2 * p.d3)))
    jl_ok = jl_h and p.n >= 5 and lam_ok and kap_ok and any(alternatives) and mu1_ok and mu2_ok

    if bounded:
        verdict = Verdict.BOUNDED
    elif ks_ok:
        verdict = Verdict.KS_BLOWUP
    elif jl_ok:
        verdict = Verdict.JL_BLOWUP
    else:
        verdict = Verdict.UNCLASSIFIED
    return RegimePrediction(verdict, details)
