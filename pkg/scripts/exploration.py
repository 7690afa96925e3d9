"""Learning curves of store 1 under multinomial and epsilon-greedy exploration.

Prints one CSV row per (seed, mode, episode) with the heuristic's training
reward alongside as the threshold:

    python scripts/exploration.py --seeds 0 1 2 3 4 > exploration.csv
"""
import argparse
import csv
import sys
from dataclasses import replace

from marlinv.baselines import HeuristicStorePolicy
from marlinv.experiment import RunConfig, build_instance
from marlinv.sim import InventoryEnv
from marlinv.trainer import run_episode, train_stores


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--episodes", type=int, default=None, help="override the episode cap")
    args = ap.parse_args()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["seed", "mode", "episode", "reward", "heuristic"])
    for seed in args.seeds:
        cfg = RunConfig(seed=seed)
        spec, demand, forecast = build_instance(cfg)
        env = InventoryEnv(spec, demand.w, forecast.w_hat, coupled=False, start=0, stop=demand.split)
        threshold = float(run_episode(env, HeuristicStorePolicy(), weights=cfg.weights).store_mean()[0])
        for mode in ("multinomial", "epsilon_greedy"):
            tc = replace(cfg.stores, exploration=mode)
            if args.episodes:
                tc = replace(tc, max_episodes=args.episodes)
            _, log = train_stores(spec, demand, forecast, tc, cfg.weights, stores={0})
            for ep, r in enumerate(log.rewards("store0")):
                w.writerow([seed, mode, ep, f"{r:.5f}", f"{threshold:.5f}"])
            sys.stdout.flush()


if __name__ == "__main__":
    main()
