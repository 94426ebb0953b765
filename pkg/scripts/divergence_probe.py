"""Lag along a single chain for a few scope-factor rules, written to one CSV per rule."""

import argparse
import csv

from offsetlag.lag_dynamics import divergence_probe, exceeds_bound, fixed_point_lag, parse_beta_rule


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rules", default="const:1,const:0.5,harmonic")
    ap.add_argument("--hops", type=int, default=1_000_000)
    ap.add_argument("--stride", type=int, default=1000)
    ap.add_argument("--alpha", type=float, default=0.34)
    ap.add_argument("--rate", type=float, default=10.0)
    ap.add_argument("--tau", type=float, default=70.0)
    args = ap.parse_args()

    lstar = fixed_point_lag(args.alpha, args.rate, args.tau)
    for text in args.rules.split(","):
        betas, lags = divergence_probe(parse_beta_rule(text), args.alpha, args.rate, args.tau, args.hops,
                                      initial_lag=120.0)
        name = text.replace(":", "_") + ".csv"
        with open(name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["hop", "beta", "lag"])
            for i in list(range(0, len(lags), args.stride)) + [len(lags) - 1]:
                w.writerow([i + 1, f"{betas[i]:.6g}", f"{lags[i]:.6g}"])
        hit = exceeds_bound(lags, 10 * lstar)
        print(f"{text:12s} final {lags[-1]:12.1f}  ({lags[-1] / lstar:.2f} L*)  passes 10 L* at hop {hit}")


if __name__ == "__main__":
    main()
