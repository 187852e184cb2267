"""Sweep the symmetry-breaking strength and print the qualitative verdicts.

    python scripts/sweep_sym_break.py --out results/sym_break --seeds 20
"""

import argparse
import sys

from symbound.config import parse_config
from symbound.harness import report, sweep


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/sym_break")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--values", default="0,0.1,0.2,0.4")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()
    base = parse_config("", [f"n_seeds={args.seeds}", *args.set])
    values = [float(v) for v in args.values.split(",")]
    _, verdicts = sweep(base, "sym_break", values, args.out, args.jobs)
    report(args.out, sys.stdout)
    for name, v in sorted(verdicts.items()):
        print(f"{name}: {'PASS' if v['passed'] else 'FAIL'} ({v['value']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
