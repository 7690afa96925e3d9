"""Heuristic and clairvoyant test reward against truck volume, for every store.

Truck volumes are given as multiples of the mean per-period shipped volume,
which is how the default instance sizes its trucks:

    python scripts/capacity_sweep.py --seeds 0 1 2 --factors 0.8 1 1.2 1.4 1.6 2 3
"""
import argparse
import csv
import sys

import numpy as np

from marlinv.evaluation import capacity_sweep
from marlinv.experiment import RunConfig, build_instance


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--factors", type=float, nargs="+", default=[0.8, 1.0, 1.2, 1.4, 1.6, 2.0, 3.0])
    args = ap.parse_args()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["seed", "store", "factor", "heuristic", "clairvoyant"])
    for seed in args.seeds:
        cfg = RunConfig(seed=seed)
        spec, demand, forecast = build_instance(cfg)
        for j in range(spec.n_stores):
            base = spec.truck_volume[j] / cfg.instance.truck_factor
            rows = capacity_sweep(spec, demand, forecast, j, base * np.array(args.factors), cfg.weights)
            for f, (_, h, c) in zip(args.factors, rows):
                w.writerow([seed, j + 1, f, f"{h:.4f}", f"{c:.4f}"])


if __name__ == "__main__":
    main()
