"""Sweep chi1 across the bounded threshold and print the atlas."""

import sys
from pathlib import Path

from chemocomp.harness.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "runs" / "threshold_sweep"
    code = main(["sweep", "--config", str(ROOT / "configs" / "threshold_sweep.cfg"), "--out", str(out)])
    if code == 0:
        print((out / "atlas.csv").read_text(), end="")
    sys.exit(code)
