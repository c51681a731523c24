"""Regenerate the CSV tables and SVG plots for every figure-style output.

Usage: python scripts/reproduce_figures.py [OUT_DIR] [--quick]
"""
import sys
from pathlib import Path

from fisherdimer.cli import main

RUNS = [
    ("phase", ["phase", "--svg"]),
    ("kernel", ["kernel", "--svg"]),
    ("corrlen", ["corrlen"]),
    ("sim_uless", ["simulate", "--figure", "uless", "--svg"]),
    ("sim_uc", ["simulate", "--figure", "uc", "--svg"]),
    ("sim_ui", ["simulate", "--figure", "ui", "--svg"]),
    ("voter", ["voter", "--x", "0.1", "--rows", "20000", "--svg"]),
]


def run(out_dir: Path, quick: bool) -> int:
    worst = 0
    for name, args in RUNS:
        if quick and name.startswith("sim_"):
            args = args + ["--sweeps", "2000"]
        code = main(args + ["--out", str(out_dir / name)])
        print(f"{name}: exit {code}", file=sys.stderr)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    argv = [a for a in sys.argv[1:] if a != "--quick"]
    sys.exit(run(Path(argv[0] if argv else "figures"), "--quick" in sys.argv))
