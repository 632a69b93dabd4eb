"""Sobolev margins of truncated bubbles against the sharp constant, and of random test functions."""

import argparse

import numpy as np

from yamabe_lab import euclidean, hyperbolic, sobolev_check
from yamabe_lab.diagnostics import random_sobolev_samples, truncated_bubble
from yamabe_lab.grid import ConformalField, RadialGrid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=3)
    ap.add_argument("--radii", default="4,8,16,32")
    ap.add_argument("--samples", type=int, default=200)
    ap.add_argument("--seed", type=int, default=20240611)
    args = ap.parse_args()
    print("truncated bubble on Euclidean space (margin relative to the right-hand side)")
    for radius in (int(r) for r in args.radii.split(",")):
        grid = RadialGrid.uniform(radius, 1 / 64)
        one = ConformalField(grid, np.ones_like(grid.nodes), "conformal-factor")
        s = sobolev_check(one, truncated_bubble(grid, args.m, radius), euclidean(args.m), radius)
        print(f"  radius {radius:3d}: lhs {s.lhs:.6e}  rhs {s.rhs:.6e}  relative margin {s.margin / s.rhs:.3e}")
    for bg in (euclidean(args.m), hyperbolic(args.m)):
        rel = [x.margin / max(x.lhs, x.rhs) for x in random_sobolev_samples(bg, args.samples, args.seed, vary_u=True)]
        print(f"{bg.kind}: {args.samples} random samples, smallest relative margin {min(rel):.3e}")


if __name__ == "__main__":
    main()
