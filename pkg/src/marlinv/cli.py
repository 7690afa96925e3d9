"""Command-line entry point: ``marlinv <command> --config run.json --run-dir DIR``.

Run directory layout::

    DIR/config.json          copy of the validated config (seed included)
    DIR/data/                instance.json, demand.csv, forecast.csv
    DIR/checkpoints/         store{j}.json, warehouse.json
    DIR/reports/             evaluation, sweep, heatmap, transfer, component CSVs
    DIR/logs/                per-episode training logs
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .agents import ActorCritic
from .demand import DemandTrace, ForecastTrace, TraceFormatError, load_trace, pearson_by_series, save_trace
from .evaluation import (STORE_POLICIES, WAREHOUSE_POLICIES, capacity_sweep, components_csv, default_pairs,
                         evaluate, evaluate_pair, heatmap_csv, store_heatmap, sweep_csv, transfer_experiment)
from .experiment import RunConfig, build_instance
from .instance import ConfigError, load_instance, save_instance
from .nn import CheckpointError, load_checkpoint, save_checkpoint
from .trainer import train_stores, train_warehouse

COMMANDS = ("gen-data", "train-stores", "train-warehouse", "evaluate", "sweep", "heatmap", "transfer", "components")


class StageError(RuntimeError):
    """Failure inside one pipeline stage; the message names the stage."""


class RunDir:
    def __init__(self, root):
        self.root = Path(root)

    def path(self, *parts) -> Path:
        p = self.root.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def data(self, name):
        return self.path("data", name)

    def checkpoint(self, name):
        return self.path("checkpoints", f"{name}.json")

    def report(self, name):
        return self.path("reports", name)

    def log(self, name):
        return self.path("logs", name)


# --- data --------------------------------------------------------------------

def gen_data(cfg: RunConfig, run: RunDir) -> None:
    spec, demand, forecast = build_instance(cfg)
    save_instance(spec, run.data("instance.json"))
    save_trace(demand.w, run.data("demand.csv"), demand.split)
    save_trace(forecast.w_hat, run.data("forecast.csv"), demand.split)


def load_data(cfg: RunConfig, run: RunDir):
    """Traces from ``data/`` when present, else regenerated from the config."""
    inst = run.root / "data" / "instance.json"
    if not inst.exists():
        return build_instance(cfg)
    spec = load_instance(inst)
    w, split = load_trace(run.root / "data" / "demand.csv")
    w_hat, _ = load_trace(run.root / "data" / "forecast.csv")
    demand = DemandTrace(w, spec.split if split is None else split)
    return spec, demand, ForecastTrace(w_hat, pearson_by_series(w, w_hat))


# --- checkpoints -------------------------------------------------------------

def save_agents(run: RunDir, store_agents=None, warehouse_agent=None) -> None:
    for j, a in enumerate(store_agents or []):
        save_checkpoint(a.to_bundle(), run.checkpoint(f"store{j}"))
    if warehouse_agent is not None:
        save_checkpoint(warehouse_agent.to_bundle(), run.checkpoint("warehouse"))


def load_store_agents(run: RunDir, n_stores: int) -> list:
    agents = []
    for j in range(n_stores):
        p = run.root / "checkpoints" / f"store{j}.json"
        if not p.exists():
            raise FileNotFoundError(f"missing checkpoint {p}")
        agents.append(ActorCritic.from_bundle(load_checkpoint(p)))
    return agents


def load_warehouse_agent(run: RunDir, required: bool = True):
    p = run.root / "checkpoints" / "warehouse.json"
    if not p.exists():
        if required:
            raise FileNotFoundError(f"missing checkpoint {p}")
        return None
    return ActorCritic.from_bundle(load_checkpoint(p))


# --- commands ----------------------------------------------------------------

def cmd_gen_data(cfg, run, args):
    gen_data(cfg, run)


def cmd_train_stores(cfg, run, args):
    spec, demand, forecast = load_data(cfg, run)
    agents, log = train_stores(spec, demand, forecast, cfg.stores, cfg.weights)
    save_agents(run, agents)
    log.to_csv(run.log("stores.csv"))


def cmd_train_warehouse(cfg, run, args):
    spec, demand, forecast = load_data(cfg, run)
    agents = load_store_agents(run, spec.n_stores)
    agent, log = train_warehouse(spec, demand, forecast, agents, cfg.warehouse, cfg.weights)
    save_agents(run, warehouse_agent=agent)
    log.to_csv(run.log("warehouse.csv"))


def cmd_evaluate(cfg, run, args):
    spec, demand, forecast = load_data(cfg, run)
    if args.baselines_only:
        agents, wh, pairs = None, None, default_pairs(with_rl=False)
    else:
        agents = load_store_agents(run, spec.n_stores)
        wh = load_warehouse_agent(run)
        pairs = default_pairs()
    report = evaluate(spec, demand, forecast, pairs, agents, wh, cfg.weights, cfg.seed)
    report.save(run.report("evaluation.csv"))


def cmd_sweep(cfg, run, args):
    spec, demand, forecast = load_data(cfg, run)
    factors = np.array(args.factors, dtype=float)
    base = spec.truck_volume[args.store] / cfg.instance.truck_factor
    rows = capacity_sweep(spec, demand, forecast, args.store, base * factors, cfg.weights)
    run.report(f"sweep_store{args.store + 1}.csv").write_text(sweep_csv(rows))


def cmd_heatmap(cfg, run, args):
    spec, demand, forecast = load_data(cfg, run)
    agent = load_store_agents(run, spec.n_stores)[args.store]
    grid, inventory, fc = store_heatmap(agent, spec, forecast, args.store, args.grid)
    run.report(f"heatmap_store{args.store + 1}.csv").write_text(heatmap_csv(grid, inventory, fc))


def cmd_transfer(cfg, run, args):
    spec, _, _ = load_data(cfg, run)
    agents = load_store_agents(run, spec.n_stores)
    wh = load_warehouse_agent(run, required=False)
    n_products = args.products or int(round(1.4 * spec.n_products))
    res = transfer_experiment(args.kind, spec, agents, wh, n_products=n_products, template=args.template,
                              seed=cfg.seed, weights=cfg.weights)
    if not res.unchanged:
        raise StageError("transfer: agent weights changed during evaluation")
    res.report.save(run.report(f"transfer_{args.kind}.csv"))


def cmd_components(cfg, run, args):
    spec, demand, forecast = load_data(cfg, run)
    agents = wh = None
    if args.policy == "rl":
        agents = load_store_agents(run, spec.n_stores)
    if args.warehouse == "rl":
        wh = load_warehouse_agent(run)
    _, res = evaluate_pair(spec, demand, forecast, args.policy, args.warehouse, agents, wh, cfg.weights, cfg.seed,
                           keep_outcomes=True)
    run.report(f"components_{args.policy}_{args.warehouse}.csv").write_text(components_csv(res))


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train-stores": cmd_train_stores,
    "train-warehouse": cmd_train_warehouse,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "heatmap": cmd_heatmap,
    "transfer": cmd_transfer,
    "components": cmd_components,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="marlinv", description="Multi-echelon inventory agents")
    sub = ap.add_subparsers(dest="command", required=True)
    parsers = {}
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON run config (defaults when omitted)")
        p.add_argument("--run-dir", type=Path, required=True)
        p.add_argument("-v", "--verbose", action="store_true")
        parsers[name] = p
    parsers["evaluate"].add_argument("--baselines-only", action="store_true",
                                     help="skip the learned policies (no checkpoints needed)")
    parsers["sweep"].add_argument("--store", type=int, default=0)
    parsers["sweep"].add_argument("--factors", type=float, nargs="+",
                                  default=[0.8, 1.0, 1.2, 1.4, 1.6, 2.0, 3.0])
    parsers["heatmap"].add_argument("--store", type=int, default=0)
    parsers["heatmap"].add_argument("--grid", type=int, default=21)
    parsers["transfer"].add_argument("--kind", choices=("more_products", "added_store"), default="more_products")
    parsers["transfer"].add_argument("--products", type=int)
    parsers["transfer"].add_argument("--template", type=int, default=0)
    parsers["components"].add_argument("--policy", choices=STORE_POLICIES, default="heuristic")
    parsers["components"].add_argument("--warehouse", choices=WAREHOUSE_POLICIES, default="heuristic")
    return ap


def read_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None
    return RunConfig.from_dict(doc)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    stage = "config"
    try:
        cfg = read_config(args.config)
        run = RunDir(args.run_dir)
        run.path("config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        stage = args.command
        HANDLERS[args.command](cfg, run, args)
    except (ConfigError, CheckpointError, TraceFormatError, FileNotFoundError, StageError, ValueError) as e:
        print(f"marlinv {stage}: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
