"""Speed of the {3,q} tessellation walk against q, next to the one-step ceiling.

    python scripts/pq_speed_vs_q.py [--steps 30] [--walks 2000] [--qs 7 10 20 50 100 200]

d(x_0, x_n) <= n * side, so l / (2 log q) can never exceed side / (2 log q).
"""
import argparse
import math

import numpy as np

from hypwalk import estimate, walks


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=30)
    ap.add_argument("--walks", type=int, default=2000)
    ap.add_argument("--qs", type=int, nargs="+", default=[7, 10, 20, 50, 100, 200])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"{'q':>5} {'side':>8} {'speed':>8} {'3sigma':>8} {'l/2logq':>8} {'ceiling':>8} {'h3-h2':>8}")
    for q in args.qs:
        spec = walks.TessellationSpec(3, q)
        batch = walks.tessellation_walks(spec, args.steps, args.walks, np.random.default_rng([args.seed, q]))
        rep = estimate.speed_kingman(batch)
        scale = 2 * math.log(q)
        h = estimate.group_entropies(walks.tessellation_steps(spec), 3) if q <= 60 else [math.nan] * 4
        print(f"{q:5d} {spec.side:8.4f} {rep.value:8.4f} {rep.three_sigma:8.4f} {rep.value / scale:8.4f} "
              f"{spec.side / scale:8.4f} {h[3] - h[2]:8.4f}")


if __name__ == "__main__":
    main()
