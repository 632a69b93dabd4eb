"""Observed convergence orders of the three formulation residuals under joint refinement of h and dt."""

import argparse
import json

from yamabe_lab import InitialDataSpec, hyperbolic, refinement_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=3)
    ap.add_argument("--k", type=int, default=6)
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--h0", type=float, default=1 / 8)
    ap.add_argument("--dt0", type=float, default=None, help="default h0^2 / 16")
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--family", default="smooth-bump")
    ap.add_argument("--json")
    args = ap.parse_args()
    dt0 = args.dt0 if args.dt0 is not None else args.h0**2 / 16
    init = InitialDataSpec(args.family, 1.0, 3.0, profile="gaussian") if args.family == "smooth-bump" \
        else InitialDataSpec(args.family, 1.0, 3.0)
    study = refinement_study(hyperbolic(args.m), init, args.k, args.T, h0=args.h0, dt0=dt0, levels=args.levels)
    print(f"{'h':>10} {'dt':>10} {'power':>11} {'divergence':>11} {'evoR':>11}")
    for row in zip(study.h, study.dt, study.power_form, study.divergence_form, study.evoR):
        print("{:10.5f} {:10.6f} {:11.3e} {:11.3e} {:11.3e}".format(*row))
    for name, orders in study.orders.items():
        print(f"order {name}: " + ", ".join(f"{o:.2f}" for o in orders))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(study.to_dict(), fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
