"""Serialization of run records, series tables and plot data.

Every file is written to a temporary sibling and renamed into place, so a
reader never sees a half-written file.  Floats in CSV files use ``%.17g``,
which round-trips IEEE doubles exactly.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..records import Cause, MomentSample, RunRecord, Sample, Termination

__all__ = [
    "SERIES_VERSION",
    "SERIES_COLUMNS",
    "RECORD_VERSION",
    "fmt",
    "atomic_write",
    "write_csv",
    "read_csv",
    "record_to_dict",
    "record_from_dict",
    "write_record",
    "read_record",
    "write_series",
    "write_plotdata",
    "write_profile",
    "read_profile",
    "RecordError",
    "clean",
]

SERIES_VERSION = "series-v1"
RECORD_VERSION = "runrecord-v1"
SERIES_COLUMNS = (
    "t",
    "step",
    "dt",
    "mass_u",
    "mass_v",
    "sup_u",
    "sup_v",
    "min_u",
    "min_v",
    "lp_u",
    "lp_v",
    "phi_u",
    "phi_v",
    "psi_u",
    "psi_v",
    "concavity_margin",
    "profile_constant",
)
_MOMENT_COLUMNS = SERIES_COLUMNS[11:]


class RecordError(ValueError):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return "nan"
    return "%.17g" % float(x)


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], comment: str | None = None) -> None:
    lines = []
    if comment is not None:
        lines.append(f"# {comment}")
    lines.append(",".join(header))
    lines.extend(",".join(fmt(x) if not isinstance(x, str) else x for x in row) for row in rows)
    atomic_write(path, "\n".join(lines) + "\n")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Return (header, rows) skipping ``#`` comment lines."""
    header: list[str] | None = None
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        cells = line.split(",")
        if header is None:
            header = cells
        else:
            rows.append(cells)
    if header is None:
        raise RecordError(f"{path}: no header row")
    return header, rows


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def _unjson(x):
    if x is None:
        return math.nan
    if x == "inf":
        return math.inf
    if x == "-inf":
        return -math.inf
    return float(x)


def _sample_dict(s: Sample) -> dict:
    d = {
        "t": s.t,
        "step": s.step,
        "dt": s.dt,
        "mass_u": s.mass_u,
        "mass_v": s.mass_v,
        "sup_u": s.sup_u,
        "sup_v": s.sup_v,
        "min_u": s.min_u,
        "min_v": s.min_v,
        "lp_u": s.lp_u,
        "lp_v": s.lp_v,
    }
    d = {k: _jsonable(v) for k, v in d.items()}
    if s.moments is not None:
        d["moments"] = {k: _jsonable(getattr(s.moments, k)) for k in _MOMENT_COLUMNS}
    return d


def clean(obj):
    if isinstance(obj, dict):
        return {k: clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _jsonable(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    return obj


def record_to_dict(rec: RunRecord, config: dict | None = None) -> dict:
    term = rec.termination
    return clean(
        {
            "version": RECORD_VERSION,
            "config_hash": rec.config_hash,
            "config": config,
            "params": rec.params,
            "moments_config": rec.moments,
            "lp_exponents": list(rec.lp_exponents),
            "stride": rec.stride,
            "termination": {
                "cause": term.cause.value,
                "t": term.t,
                "fit_T": term.fit_T,
                "fit_q": term.fit_q,
                "message": term.message,
            },
            "samples": [_sample_dict(s) for s in rec.samples],
            "audits": rec.audits,
            "final": rec.final,
            "profiles": rec.profiles,
        }
    )


def record_from_dict(d: dict) -> RunRecord:
    if not isinstance(d, dict):
        raise RecordError("run record must be a JSON object")
    if d.get("version") != RECORD_VERSION:
        raise RecordError(f"unsupported record version {d.get('version')!r}")
    try:
        samples = []
        for s in d["samples"]:
            mom = s.get("moments")
            moments = (
                MomentSample(t=_unjson(s["t"]), **{k: _unjson(mom[k]) for k in _MOMENT_COLUMNS}) if mom else None
            )
            samples.append(
                Sample(
                    t=_unjson(s["t"]),
                    step=int(s["step"]),
                    dt=_unjson(s["dt"]),
                    mass_u=_unjson(s["mass_u"]),
                    mass_v=_unjson(s["mass_v"]),
                    sup_u=_unjson(s["sup_u"]),
                    sup_v=_unjson(s["sup_v"]),
                    min_u=_unjson(s["min_u"]),
                    min_v=_unjson(s["min_v"]),
                    lp_u=_unjson(s["lp_u"]),
                    lp_v=_unjson(s["lp_v"]),
                    moments=moments,
                )
            )
        t = d["termination"]
        term = Termination(
            cause=Cause(t["cause"]),
            t=_unjson(t["t"]),
            fit_T=None if t.get("fit_T") is None else float(t["fit_T"]),
            fit_q=None if t.get("fit_q") is None else float(t["fit_q"]),
            message=t.get("message", ""),
        )
        return RunRecord(
            samples=samples,
            termination=term,
            params=d["params"],
            moments=d.get("moments_config"),
            lp_exponents=tuple(d.get("lp_exponents", (2.0, 2.0))),
            stride=int(d.get("stride", 1)),
            config_hash=d.get("config_hash", ""),
            audits=d.get("audits", {}),
            final=d.get("final", {}),
            profiles=d.get("profiles"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise RecordError(f"corrupt run record: {exc!r}") from None


def write_record(path, rec: RunRecord, config: dict | None = None) -> None:
    atomic_write(path, json.dumps(record_to_dict(rec, config), indent=1, sort_keys=True, allow_nan=False) + "\n")


def read_record(path) -> RunRecord:
    try:
        d = json.loads(Path(path).read_text())
    except OSError as exc:
        raise RecordError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise RecordError(f"{path} is not valid JSON: {exc}") from None
    return record_from_dict(d)


def _series_row(s: Sample) -> list:
    row = [s.t, s.step, s.dt, s.mass_u, s.mass_v, s.sup_u, s.sup_v, s.min_u, s.min_v, s.lp_u, s.lp_v]
    if s.moments is None:
        row += [math.nan] * len(_MOMENT_COLUMNS)
    else:
        row += [getattr(s.moments, k) for k in _MOMENT_COLUMNS]
    return row


def write_series(path, rec: RunRecord) -> None:
    write_csv(path, SERIES_COLUMNS, (_series_row(s) for s in rec.samples), comment=SERIES_VERSION)


def write_plotdata(directory, rec: RunRecord) -> None:
    d = Path(directory)
    write_csv(
        d / "supnorms.csv",
        ("t", "sup_u", "sup_v", "sup"),
        ([s.t, s.sup_u, s.sup_v, s.sup_u + s.sup_v] for s in rec.samples),
    )
    write_csv(
        d / "moments.csv",
        ("t", "phi_u", "phi_v", "psi_u", "psi_v"),
        (
            [s.t] + ([getattr(s.moments, k) for k in ("phi_u", "phi_v", "psi_u", "psi_v")] if s.moments else [math.nan] * 4)
            for s in rec.samples
        ),
    )
    f = rec.final
    if f:
        write_profile(d / "profiles.csv", f["r"], f["u"], f["v"], f["w"])


def write_profile(path, r, u, v, w=None) -> None:
    if w is None:
        write_csv(path, ("r", "u", "v"), zip(r, u, v))
    else:
        write_csv(path, ("r", "u", "v", "w"), zip(r, u, v, w))


def read_profile(path) -> dict:
    header, rows = read_csv(path)
    for col in ("r", "u", "v"):
        if col not in header:
            raise RecordError(f"{path}: missing column '{col}'")
    try:
        data = np.array([[float(x) for x in row] for row in rows], dtype=float).reshape(len(rows), len(header))
    except ValueError as exc:
        raise RecordError(f"{path}: {exc}") from None
    return {name: data[:, i] for i, name in enumerate(header)}
