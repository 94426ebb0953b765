"""Slope of final lag against chain length as the mean buffer width varies.

Each width is given as a fraction of the balancing width r*tau/alpha.
"""

import argparse
import csv

import numpy as np
from numpy.polynomial import polynomial as P

from offsetlag.lag_dynamics import chain_drift, fixed_point_lag
from offsetlag.simulator import SimConfig, run_simulation


def lag_depth_slope(cfg):
    peers = run_simulation(cfg).peers
    depth = np.array([p.chain_len for p in peers], dtype=float)
    lag = np.array([p.lag for p in peers], dtype=float)
    widths = [p.width_at_place for p in peers if p.ref_peer != 0]
    return P.polyfit(depth, lag, 1)[1], float(np.mean(widths))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--fractions", default="0.5,0.75,1.0,1.25")
    ap.add_argument("--tracker-width", type=int, default=3000)
    ap.add_argument("--out", default="stability_sweep.csv")
    args = ap.parse_args()

    base = SimConfig(n_peers=args.n, tracker_width=args.tracker_width, selection="random", scheme="pp-width",
                     width_model="stationary", width_mean=1.0, width_spread=0.1, report_interval=None,
                     trace_bitmaps=False)
    lstar = fixed_point_lag(base.alpha, base.rate, base.tau)
    rows = []
    for frac in (float(x) for x in args.fractions.split(",")):
        for seed in range(args.seeds):
            slope, w_bar = lag_depth_slope(base.replace(width_mean=frac * lstar, seed=seed))
            pred = chain_drift(w_bar, base.tau, base.alpha, base.rate)
            rows.append((frac, seed, slope, w_bar, pred))
            print(f"width {frac:.2f} L*  seed {seed}: slope {slope:8.2f}  predicted {pred:8.2f}")

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["width_fraction", "seed", "slope", "mean_width", "predicted"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
