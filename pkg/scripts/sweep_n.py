"""Sweep the number of series N and check that the measured gap shrinks.

    python scripts/sweep_n.py --out results/n --seeds 10 --values 16,64,256
"""

import argparse
import sys

from symbound.config import parse_config
from symbound.harness import report, sweep


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/n")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--values", default="16,64,256")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()
    base = parse_config("", [f"n_seeds={args.seeds}", *args.set])
    values = [int(v) for v in args.values.split(",")]
    _, verdicts = sweep(base, "N", values, args.out, args.jobs)
    report(args.out, sys.stdout)
    v = verdicts["gap_nonincreasing_in_N"]
    print(f"gap_nonincreasing_in_N: {'PASS' if v['passed'] else 'FAIL'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
