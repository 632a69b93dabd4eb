"""Distance on B_r0 between solutions on B_k and on the largest ball, for several initial data."""

import argparse
import json

from yamabe_lab import InitialDataSpec, hyperbolic, run_exhaustion


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=3)
    ap.add_argument("--r0", type=float, default=2.0)
    ap.add_argument("--ks", default="6,8,10,12,14")
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--h", type=float, default=1 / 64)
    ap.add_argument("--json", help="write the reports here")
    args = ap.parse_args()
    ks = [int(k) for k in args.ks.split(",")]
    out = {}
    for family in ("smooth-bump", "high-frequency-oscillation"):
        _, rep = run_exhaustion(hyperbolic(args.m), InitialDataSpec(family, 1.0, 3.0), ks, args.T, r0=args.r0, h=args.h)
        out[family] = rep.to_dict()
        print(f"{family}: k_ref = {rep.k_ref}, monotone = {rep.monotone}")
        for k in sorted(rep.distances):
            print(f"  k = {k:3d}  d_k = {rep.distances[k]:.3e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
