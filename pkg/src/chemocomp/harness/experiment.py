"""Config-driven runs, audits and sweeps."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..dynamics import make_state, mass_audit, run
from ..functionals import MomentConfig, audit_inequality
from ..grid import RadialField, RadialGrid
from ..initdata import (
    BoundedHypothesis,
    JLBlowupHypothesis,
    KSBlowupHypothesis,
    ValidationReport,
    make_bump,
    make_concentrated,
    validate,
)
from ..model import ModelParams, classify_regime, mu_condition
from ..records import RunRecord
from . import io
from .config import RunConfig, sweep_points

__all__ = [
    "build_initial",
    "hypothesis_for",
    "validate_initial",
    "simulate",
    "AuditReport",
    "audit_record",
    "ATLAS_OUTCOME_COLUMNS",
    "run_sweep",
]

log = logging.getLogger(__name__)

CONCAVITY_RTOL = 1e-6
ATLAS_OUTCOME_COLUMNS = ("predicted", "termination", "t_final", "fit_T", "fit_q", "status")


def build_initial(cfg: RunConfig, g: Optional[RadialGrid] = None) -> tuple[RadialField, RadialField]:
    """Initial densities described by the ``initial`` section (may raise InfeasibleData)."""
    g = g or cfg.build_grid()
    kind, prm = cfg.initial.kind, cfg.initial.params
    if kind == "zero":
        return g.zeros(), g.zeros()
    if kind == "constant":
        return g.field(np.full(g.m, prm.get("u", 0.0))), g.field(np.full(g.m, prm.get("v", 0.0)))
    if kind == "bump":
        return make_bump(g, **prm)
    if kind == "concentrated":
        split = prm.get("split", 0.0 if cfg.model.is_jl else 0.5)
        return make_concentrated(g, prm["M0"], prm["M0_tilde"], prm["r_star"], prm["L"], split=split)
    if kind == "file":
        path = Path(cfg.base_dir) / prm["path"]
        prof = io.read_profile(path)
        if prof["r"].shape != (g.m,) or not np.allclose(prof["r"], g.cell_centers, rtol=1e-12, atol=0):
            raise io.RecordError(f"{path}: radii do not match the configured grid ({g.m} cells)")
        return g.field(prof["u"]), g.field(prof["v"])
    raise ValueError(f"unknown initial kind {kind!r}")


def hypothesis_for(cfg: RunConfig):
    """Hypothesis set matching the model variant and the data description."""
    prm = cfg.initial.params
    if cfg.initial.kind != "concentrated":
        return BoundedHypothesis()
    if cfg.model.is_jl:
        return JLBlowupHypothesis(M0=prm["M0"], M0_tilde=prm["M0_tilde"], r_star=prm["r_star"])
    return KSBlowupHypothesis(L=prm["L"], M0=prm["M0"], M0_tilde=prm["M0_tilde"], r_star=prm["r_star"])


def validate_initial(cfg: RunConfig, u0: RadialField, v0: RadialField) -> ValidationReport:
    return validate(u0, v0, hypothesis_for(cfg))


def simulate(cfg: RunConfig, out: Optional[Path] = None) -> RunRecord:
    """Run one configuration, attach audits, and write outputs when ``out`` is given."""
    g = cfg.build_grid()
    u0, v0 = build_initial(cfg, g)
    state = make_state(cfg.model, u0, v0)
    rec = run(
        cfg.model,
        state,
        cfg.step,
        moments=cfg.moments,
        stride=cfg.stride,
        lp_exponents=cfg.lp,
        fit_k=cfg.fit_k,
        store_profiles=cfg.store_profiles,
    )
    rec.config_hash = cfg.hash()
    rec.audits = audit_record(rec, cfg.model, cfg.moments).as_dict()
    if out is not None:
        out = Path(out)
        io.write_record(out / "runrecord.json", rec, cfg.canonical())
        io.write_series(out / "series.csv", rec)
        io.write_plotdata(out / "plotdata", rec)
    return rec


@dataclass
class AuditReport:
    mass: dict
    positivity: dict
    concavity: Optional[dict]
    inequality: Optional[dict]
    hard_failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.hard_failures

    def as_dict(self) -> dict:
        return {
            "mass": self.mass,
            "positivity": self.positivity,
            "concavity": self.concavity,
            "inequality": self.inequality,
            "hard_failures": list(self.hard_failures),
        }


def audit_record(rec: RunRecord, p: ModelParams, moments: Optional[MomentConfig]) -> AuditReport:
    """Mass growth bound, positivity, concavity (when it is a hard invariant) and the Riccati fit."""
    failures = []
    ma = mass_audit(rec, p)
    if not ma.ok:
        failures.append("mass growth bound")

    mins = np.minimum(rec.column("min_u"), rec.column("min_v"))
    worst_min = float(np.min(mins)) if mins.size else 0.0
    positivity = {"ok": bool(worst_min >= 0), "min_density": worst_min}
    if not positivity["ok"]:
        failures.append("positivity")

    concavity = None
    margins = rec.moment_column("concavity_margin")
    if margins.size and np.all(np.isfinite(margins)):
        sup_u = rec.column("sup_u")
        ratio = margins / np.maximum(sup_u, np.finfo(float).tiny)
        # a hard invariant only for JL runs under the mu condition from nonincreasing data
        hard = p.is_jl and all(mu_condition(p)) and margins[0] <= 0
        worst = float(np.max(ratio))
        concavity = {"hard": bool(hard), "max_margin_over_sup": worst, "tolerance": CONCAVITY_RTOL}
        concavity["ok"] = bool(worst <= CONCAVITY_RTOL)
        if hard and not concavity["ok"]:
            failures.append("concavity")

    inequality = None
    if moments is not None and len(rec.samples) >= 3:
        try:
            inequality = audit_inequality(rec, moments, p).as_dict()
        except ValueError as exc:
            inequality = {"error": str(exc)}
    return AuditReport(
        mass=ma.as_dict(), positivity=positivity, concavity=concavity, inequality=inequality, hard_failures=failures
    )


def _sweep_point(args) -> dict:
    assigned, cfg, point_dir = args
    point_dir = Path(point_dir)
    predicted = classify_regime(cfg.model).verdict.value
    row = {"hash": cfg.hash(), "predicted": predicted, **assigned}
    record_path = point_dir / "runrecord.json"
    if record_path.exists():
        try:
            rec = io.read_record(record_path)
            return {**row, **_outcome(rec), "status": "ok"}
        except io.RecordError:
            log.warning("ignoring unreadable cached record %s", record_path)
    try:
        rec = simulate(cfg, point_dir)
    except Exception as exc:  # per-point failures are recorded, the sweep goes on
        return {**row, "termination": "", "t_final": math.nan, "fit_T": math.nan, "fit_q": math.nan,
                "status": f"error: {type(exc).__name__}: {exc}".replace(",", ";").replace("\n", " ")}
    return {**row, **_outcome(rec), "status": "ok"}


def _outcome(rec: RunRecord) -> dict:
    t = rec.termination
    return {
        "termination": t.cause.value,
        "t_final": t.t,
        "fit_T": math.nan if t.fit_T is None else t.fit_T,
        "fit_q": math.nan if t.fit_q is None else t.fit_q,
    }


def run_sweep(cfg: RunConfig, out: Path, workers: Optional[int] = None) -> list[dict]:
    """Run every sweep point (in parallel) and write ``atlas.csv``; cached points are reused."""
    out = Path(out)
    keys = list(cfg.sweep)
    points = sweep_points(cfg)
    jobs = [(assigned, c, out / "points" / c.hash()) for assigned, c in points]
    workers = workers or os.cpu_count() or 1
    if workers <= 1 or len(jobs) <= 1:
        rows = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    header = ("hash", *keys, *ATLAS_OUTCOME_COLUMNS)
    io.write_csv(out / "atlas.csv", header, ([r[h] for h in header] for r in rows))
    return rows
