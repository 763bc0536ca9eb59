"""Simulate configs/bounded.cfg and print the sup-norm history."""

import sys
from pathlib import Path

from chemocomp.harness import io
from chemocomp.harness.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "runs" / "bounded"
    code = main(["simulate", "--config", str(ROOT / "configs" / "bounded.cfg"), "--out", str(out)])
    if code == 0:
        header, rows = io.read_csv(out / "plotdata" / "supnorms.csv")
        sups = [float(r[header.index("sup")]) for r in rows]
        print(f"sup(u)+sup(v): initial {sups[0]:.6g}, max {max(sups):.6g}, final {sups[-1]:.6g}")
    sys.exit(code)
