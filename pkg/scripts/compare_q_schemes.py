"""Discrepancy and the weight-dependent part of the vanilla bound for each weighting scheme.

Uses one fixed set of fresh series per generator so schemes are compared on
common random numbers.

    python scripts/compare_q_schemes.py --drift 0.05
"""

import argparse
import sys

import numpy as np

from symbound.bound_lab import DiscrepancyOracle, MCConfig
from symbound.dynamics import GeneratorSpec
from symbound.forecasters import LossSpec, ParameterSpace
from symbound.qweights import (
    QOptConfig,
    confidence_coeff,
    exp_decay_q,
    norms,
    one_hot_last_q,
    optimize_q,
    uniform_q,
)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, default=16)
    ap.add_argument("--k", type=int, default=1)
    ap.add_argument("--drift", type=float, default=0.05, help="omega drift per step")
    ap.add_argument("--M", type=float, default=16.0)
    ap.add_argument("--delta", type=float, default=0.1)
    ap.add_argument("--radius", type=float, default=2.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = GeneratorSpec(omega_drift=args.drift)
    oracle = DiscrepancyOracle(spec, ParameterSpace.full(args.radius), MCConfig(seed=args.seed),
                               LossSpec(args.M), args.k, args.T)
    H = args.T - args.k
    schemes = {
        "uniform": uniform_q(H),
        "exp_decay(0.9)": exp_decay_q(H, 0.9),
        "exp_decay(0.7)": exp_decay_q(H, 0.7),
        "last": one_hot_last_q(H),
        "optimized": optimize_q(oracle, args.M, args.delta, 0, args.T, QOptConfig(iters=40), horizon=H),
    }
    coeff = confidence_coeff(args.M, args.delta)
    print(f"{'scheme':<16}{'disc':>12}{'||q||_2':>10}{'2 disc + ||q||_2 c':>22}")
    for name, q in schemes.items():
        disc = oracle(q)
        l2 = norms(q)[1]
        print(f"{name:<16}{disc:>12.5f}{l2:>10.4f}{2 * disc + l2 * coeff:>22.4f}")
    print("optimized q:", np.round(schemes["optimized"].values, 4).tolist())
    return 0


if __name__ == "__main__":
    sys.exit(main())
