#!/usr/bin/env python3
"""Characteristic-function battery: empirical law vs exponent for six triplets."""

import argparse
import sys

import numpy as np

from levylab.levy import (
    JumpMeasure,
    LevyTriplet1D,
    LevyTriplet2D,
    char_exponent_1d,
    char_exponent_2d,
    empirical_char_function,
    sample_ensemble,
)

BATTERY = {
    "drift": LevyTriplet1D(beta=1.0),
    "gauss": LevyTriplet1D(alpha=1.0),
    "one_big_atom": LevyTriplet1D(jumps=JumpMeasure(atoms=[(2.0, 3.0)])),
    "big_small_atoms": LevyTriplet1D(jumps=JumpMeasure(atoms=[(2.0, 0.5), (0.5, 1.5)])),
    "mixed": LevyTriplet1D(beta=0.3, alpha=0.5, jumps=JumpMeasure(atoms=[(0.5, 1.0), (-2.0, 0.4)])),
    "mixed2d": LevyTriplet2D(
        beta_p=0.4, beta_q=-0.7, alpha=((1.0, 0.3), (0.3, 0.8)),
        jumps=JumpMeasure(atoms=[((1.5, 0.5), 0.6), ((0.2, -0.3), 1.1)]),
    ),
}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--t", type=float, default=1.0)
    args = ap.parse_args()

    failures = 0
    for name, triplet in BATTERY.items():
        xs = sample_ensemble(triplet, args.t, args.n, seed=args.seed)
        two_d = isinstance(triplet, LevyTriplet2D)
        probe = [(0.5, 0.5), (1.0, -0.5), (1.5, 1.0)] if two_d else [0.5, 1.0, 2.0, 3.0]
        print(f"{name}:")
        for arg in probe:
            if two_d:
                mu, lam = arg
                emp, se = empirical_char_function(xs, (mu, -lam))
                theo = np.exp(args.t * char_exponent_2d(triplet, mu, lam))
            else:
                emp, se = empirical_char_function(xs, arg)
                theo = np.exp(args.t * char_exponent_1d(triplet, arg))
            dist = abs(emp - theo)
            verdict = "ok" if dist <= 4 * se + 1e-12 else "FAIL"
            failures += verdict == "FAIL"
            print(f"  arg={arg}: |emp - theory| = {dist:.2e}  (4se = {4 * se:.2e})  {verdict}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
