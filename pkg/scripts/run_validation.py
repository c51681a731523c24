"""Run the acceptance suite and print a one-line summary per criterion.

Usage: python scripts/run_validation.py [--quick] [--only 1,2,9] [--json report.json]
"""
import argparse
import json
import sys

from fisherdimer.validation import run_suite


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--only", help="comma-separated criterion numbers")
    ap.add_argument("--json", help="write the full report here")
    args = ap.parse_args()
    only = {int(v) for v in args.only.split(",")} if args.only else None
    results = run_suite(quick=args.quick, only=only)
    for r in results:
        print(f"{r.criterion:>2} {r.name:<26} {'PASS' if r.passed else 'FAIL'} {r.seconds:7.1f}s")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump([r.to_dict() for r in results], fh, indent=2, sort_keys=True)
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
