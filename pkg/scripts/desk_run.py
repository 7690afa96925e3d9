"""Train and evaluate the desk-scale system for several seeds.

Writes one run directory per seed (same layout as the CLI) plus a summary
CSV of the store-only and coupled test rewards:

    python scripts/desk_run.py --seeds 0 1 2 3 4 --out runs/desk
"""
import argparse
import csv
import time
from pathlib import Path

import numpy as np

from marlinv.baselines import HeuristicStorePolicy
from marlinv.agents import RLStorePolicy
from marlinv.cli import RunDir, save_agents
from marlinv.demand import save_trace
from marlinv.evaluation import default_pairs, evaluate, evaluate_stores_only
from marlinv.experiment import RunConfig, build_instance, train_system
from marlinv.instance import save_instance


def run_seed(seed: int, out: Path) -> dict:
    cfg = RunConfig(seed=seed)
    run = RunDir(out / f"seed{seed}")
    spec, demand, forecast = build_instance(cfg)
    save_instance(spec, run.data("instance.json"))
    save_trace(demand.w, run.data("demand.csv"), demand.split)
    save_trace(forecast.w_hat, run.data("forecast.csv"), demand.split)
    t0 = time.perf_counter()
    agents, wh, logs = train_system(cfg, spec, demand, forecast)
    seconds = time.perf_counter() - t0
    save_agents(run, agents, wh)
    for name, log in logs.items():
        log.to_csv(run.log(f"{name}.csv"))
    evaluate(spec, demand, forecast, default_pairs(), agents, wh, cfg.weights, seed).save(run.report("evaluation.csv"))
    rl = evaluate_stores_only(spec, demand, forecast, RLStorePolicy(agents), cfg.weights)
    heur = evaluate_stores_only(spec, demand, forecast, HeuristicStorePolicy(), cfg.weights)
    return {"seed": seed, "train_seconds": round(seconds, 1), "rl_store": float(rl.mean()),
            "heuristic_store": float(heur.mean()), "margin": float(rl.mean() - heur.mean()),
            **{f"rl_store{j + 1}": float(v) for j, v in enumerate(rl)},
            **{f"heuristic_store{j + 1}": float(v) for j, v in enumerate(heur)}}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--out", type=Path, default=Path("runs/desk"))
    args = ap.parse_args()
    rows = []
    for seed in args.seeds:
        rows.append(run_seed(seed, args.out))
        print({k: (round(v, 4) if isinstance(v, float) else v) for k, v in rows[-1].items()}, flush=True)
    with open(args.out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    margins = np.array([r["margin"] for r in rows])
    print(f"mean RL - heuristic margin {margins.mean():+.4f}; seeds >= 0.03: {(margins >= 0.03).sum()}/{len(rows)}")


if __name__ == "__main__":
    main()
