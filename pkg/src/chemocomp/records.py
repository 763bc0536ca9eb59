"""Run records: the diagnostic time series a simulation leaves behind."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = ["Cause", "MomentSample", "Sample", "Termination", "RunRecord"]


class Cause(str, enum.Enum):
    REACHED_T_END = "ReachedTEnd"
    BLOWUP_THRESHOLD = "BlowupThreshold"
    STEP_COLLAPSE = "StepCollapse"


@dataclass(frozen=True)
class MomentSample:
    t: float
    phi_u: float
    phi_v: float
    psi_u: float
    psi_v: float
    concavity_margin: float
    profile_constant: float


@dataclass(frozen=True)
class Sample:
    t: float
    step: int
    dt: float
    mass_u: float
    mass_v: float
    sup_u: float
    sup_v: float
    min_u: float
    min_v: float
    lp_u: float
    lp_v: float
    moments: Optional[MomentSample] = None

    @property
    def sup(self) -> float:
        return self.sup_u + self.sup_v


@dataclass
class Termination:
    cause: Cause
    t: float
    fit_T: Optional[float] = None
    fit_q: Optional[float] = None
    message: str = ""


@dataclass
class RunRecord:
    """Everything a run produced.

    ``final`` holds the last profiles (keys ``r``, ``u``, ``v``, ``w``);
    ``profiles`` optionally holds u, v at every sample for re-analysis.
    """

    samples: list
    termination: Termination
    params: dict = field(default_factory=dict)
    moments: Optional[dict] = None
    lp_exponents: tuple = (2.0, 2.0)
    stride: int = 1
    config_hash: str = ""
    audits: dict = field(default_factory=dict)
    final: dict = field(default_factory=dict)
    profiles: Optional[dict] = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples], dtype=float)

    def moment_column(self, name: str) -> np.ndarray:
        return np.array(
            [getattr(s.moments, name) if s.moments is not None else np.nan for s in self.samples],
            dtype=float,
        )

    @property
    def times(self) -> np.ndarray:
        return self.column("t")
