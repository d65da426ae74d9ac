"""Poisson-Delaunay speeds over a finer intensity grid, one line per intensity.

    python scripts/pd_sweep.py [--trials 40] [--steps 30] [--lambdas 1 0.5 0.3 0.2 0.1 0.07 0.05]
"""
import argparse
import math

import numpy as np

from hypwalk import estimate, walks
from hypwalk.field import LazyField


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=40)
    ap.add_argument("--steps", type=int, default=30)
    ap.add_argument("--lambdas", type=float, nargs="+", default=[1.0, 0.5, 0.3, 0.2, 0.1, 0.07, 0.05])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"{'lambda':>7} {'speed':>7} {'3sig':>6} {'graph':>7} {'3sig':>6} {'l/2log(1/lam)':>14} {'deg':>6}")
    for lam in args.lambdas:
        batch = walks.TraceBatch.stack([
            walks.pd_walk(LazyField.for_intensity(1000 * k + args.seed, lam), lam, args.steps,
                          np.random.default_rng([args.seed, k]))
            for k in range(args.trials)])
        ell = estimate.speed_kingman(batch)
        ell_g = estimate.speed_kingman(batch, graph=True)
        scale = 2 * math.log(1 / lam)
        ratio = ell.value / scale if scale else math.nan
        print(f"{lam:7.3f} {ell.value:7.3f} {ell.three_sigma:6.3f} {ell_g.value:7.3f} {ell_g.three_sigma:6.3f} "
              f"{ratio:14.3f} {np.mean(batch.extras['degree0']):6.2f}")


if __name__ == "__main__":
    main()
