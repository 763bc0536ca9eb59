"""Build the concentrated data, run the JL blow-up configuration, then audit the record."""

import sys
from pathlib import Path

from chemocomp.harness.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "runs" / "jl_blowup"
    cfg = str(ROOT / "configs" / "jl_blowup.cfg")
    for argv in (["make-data", "--config", cfg, "--out", str(out)],
                 ["simulate", "--config", cfg, "--out", str(out)],
                 ["audit", str(out / "runrecord.json")]):
        code = main(argv)
        if code:
            sys.exit(code)
