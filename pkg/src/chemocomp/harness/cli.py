"""Command-line entry point: classify, simulate, sweep, audit, make-data.

Exit codes: 0 success, 1 a checked property failed (audit violation,
infeasible or invalid initial data), 2 bad configuration or input files.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from ..functionals import MomentConfig
from ..initdata import InfeasibleData
from ..model import ModelParams, classify_regime
from . import io
from .config import ConfigError, load
from .experiment import audit_record, build_initial, run_sweep, simulate, validate_initial

__all__ = ["main"]

log = logging.getLogger("chemocomp")


def _setup_logging() -> None:
    level = os.environ.get("CHEMO_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _load(args):
    cfg = load(args.config)
    if getattr(args, "stride", None) is not None:
        if args.stride < 1:
            raise ConfigError("--stride must be >= 1")
        cfg = replace(cfg, stride=args.stride)
    return cfg


def cmd_classify(args) -> int:
    cfg = _load(args)
    pred = classify_regime(cfg.model)
    print(f"verdict: {pred.verdict.value}")
    for c in pred.details:
        thr = "" if c.threshold is None or math.isnan(c.threshold) else f"  threshold={c.threshold:.17g}"
        print(f"  [{'x' if c.satisfied else ' '}] {c.name}{thr}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    try:
        rec = simulate(cfg, out)
    except InfeasibleData as exc:
        print(f"infeasible initial data: {exc} (best achievable {exc.best:.17g})", file=sys.stderr)
        return 1
    t = rec.termination
    print(f"termination: {t.cause.value} at t={t.t:.17g}")
    if t.fit_T is not None:
        print(f"blow-up fit: T={t.fit_T:.17g} q={t.fit_q:.6g}")
    print(f"wrote {out / 'runrecord.json'}, {out / 'series.csv'}, {out / 'plotdata'}/")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    rows = run_sweep(cfg, Path(args.out), workers=args.workers)
    failed = sum(1 for r in rows if r["status"] != "ok")
    print(f"{len(rows)} points, {failed} failed; atlas at {Path(args.out) / 'atlas.csv'}")
    return 0


def cmd_audit(args) -> int:
    try:
        rec = io.read_record(args.record)
    except io.RecordError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    params = ModelParams(**rec.params)
    moments = None
    if args.config:
        moments = load(args.config).moments
    elif rec.moments:
        moments = MomentConfig(**rec.moments)
    report = audit_record(rec, params, moments)

    ma = report.mass
    print(f"mass growth bound: {'ok' if ma['ok'] else 'VIOLATED'} (max relative excess {ma['max_violation']:.3e})")
    for v in ma["violations"][:5]:
        print(f"  {v['species']} at t={v['t']:.17g}: {v['mass']:.17g} > {v['bound']:.17g}")
    pos = report.positivity
    print(f"positivity: {'ok' if pos['ok'] else 'VIOLATED'} (min density {pos['min_density']:.3e})")
    if report.concavity is not None:
        c = report.concavity
        tag = "ok" if c["ok"] else ("VIOLATED" if c["hard"] else "not monotone (not required here)")
        print(f"concavity: {tag} (max margin/sup {c['max_margin_over_sup']:.3e}, tolerance {c['tolerance']:.0e})")
    if report.inequality is not None:
        q = report.inequality
        if "error" in q:
            print(f"riccati: not assessed ({q['error']})")
        else:
            bound = "none (phi0 below threshold)" if q["bound"] is None else f"{q['bound']:.17g}"
            print(f"riccati: A={q['A']:.6g} B={q['B']:.6g} bound T*={bound} observed={q['observed_t']:.17g}"
                  f" {'consistent' if q['consistent'] else 'INCONSISTENT'}")
    out = Path(args.out) if args.out else Path(args.record).parent
    io.atomic_write(out / "audit.json", json.dumps(io.clean(report.as_dict()), indent=1, sort_keys=True) + "\n")
    if report.hard_failures:
        print(f"hard invariant violated: {', '.join(report.hard_failures)}")
        return 1
    return 0


def cmd_make_data(args) -> int:
    cfg = _load(args)
    g = cfg.build_grid()
    try:
        u0, v0 = build_initial(cfg, g)
    except InfeasibleData as exc:
        print(f"infeasible: {exc} (best achievable {exc.best:.17g})", file=sys.stderr)
        return 1
    report = validate_initial(cfg, u0, v0)
    print(report)
    path = Path(args.out) / "initial.csv"
    io.write_profile(path, g.cell_centers, u0.values, v0.values)
    print(f"wrote {path}")
    return 0 if report.ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chemocomp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="print the predicted regime and every condition")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("simulate", help="run one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stride", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run the sweep grid of a configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--stride", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("audit", help="check a saved run record")
    p.add_argument("record")
    p.add_argument("--config", help="take the moment window from this config instead of the record")
    p.add_argument("--out", help="directory for audit.json (default: next to the record)")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("make-data", help="build and validate initial data, write initial.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_data)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except io.RecordError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
