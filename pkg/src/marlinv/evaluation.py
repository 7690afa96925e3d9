"""Test-split evaluation, capacity sweeps, policy heatmaps and transfer runs.

Reports are plain CSV: one row per (store policy, warehouse policy) with the
mean per-period per-product reward of the warehouse and of every store.
Every report carries the instance hash and seed so it can be reproduced.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .agents import ACTION_LEVELS, STORE_FEATURES, ActorCritic, RLStorePolicy, RLWarehousePolicy
from .baselines import (FIXED_POLICIES, FixedWarehousePolicy, HeuristicConfig, HeuristicStorePolicy,
                        HeuristicWarehousePolicy)
from .demand import DemandTrace, ForecastTrace, generate_demand, generate_forecast
from .instance import InstanceSpec, ProductSpec, StoreSpec, spec_hash, with_truck_volumes
from .nn import checksum
from .rewards import RewardWeights
from .sim import InventoryEnv
from .trainer import EpisodeResult, RolloutEstimator, run_episode

STORE_POLICIES = ("rl", "heuristic", "clairvoyant")
WAREHOUSE_POLICIES = ("rl", "heuristic", "clairvoyant") + FIXED_POLICIES


@dataclass
class EvalRow:
    policy: str
    warehouse: str
    warehouse_reward: float
    store_rewards: np.ndarray  # (S,)
    components: dict = field(default_factory=dict)  # name -> (S,) mean over test periods


@dataclass
class EvalReport:
    rows: list
    spec_hash: str
    seed: int

    def columns(self) -> list:
        S = len(self.rows[0].store_rewards) if self.rows else 0
        return ["policy", "warehouse", "warehouse_reward"] + [f"store{j + 1}" for j in range(S)]

    def get(self, policy: str, warehouse: str) -> EvalRow:
        for r in self.rows:
            if r.policy == policy and r.warehouse == warehouse:
                return r
        raise KeyError((policy, warehouse))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# spec_hash={self.spec_hash} seed={self.seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        for r in self.rows:
            w.writerow([r.policy, r.warehouse, _fmt(r.warehouse_reward)] + [_fmt(v) for v in r.store_rewards])
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def _fmt(v: float) -> str:
    return "nan" if not np.isfinite(v) else f"{float(v):.6f}"


# --- policy construction -------------------------------------------------------

def make_store_policy(name: str, store_agents=None):
    if name == "rl":
        if not store_agents:
            raise ValueError("store policy 'rl' needs trained store agents")
        return RLStorePolicy(store_agents, "argmax")
    if name == "heuristic":
        return HeuristicStorePolicy(HeuristicConfig())
    if name == "clairvoyant":
        return HeuristicStorePolicy(HeuristicConfig(clairvoyant=True))
    raise ValueError(f"unknown store policy {name!r}; expected one of {STORE_POLICIES}")


def make_warehouse_policy(name: str, store_policy_name: str, store_agents=None, warehouse_agent=None,
                          seed: int = 0):
    """Return ``(warehouse_policy, estimator)``.

    Rollouts use a private greedy copy of the store policy.  The clairvoyant
    warehouse rolls that copy out on realized sales, so its projections are
    the requests the stores will actually make.
    """
    if name == "rl":
        if warehouse_agent is None:
            raise ValueError("warehouse policy 'rl' needs a trained warehouse agent")
        return (RLWarehousePolicy(warehouse_agent, "argmax"),
                RolloutEstimator(make_store_policy(store_policy_name, store_agents)))
    if name == "heuristic":
        return HeuristicWarehousePolicy(), RolloutEstimator(make_store_policy(store_policy_name, store_agents))
    if name == "clairvoyant":
        return (HeuristicWarehousePolicy(),
                RolloutEstimator(make_store_policy(store_policy_name, store_agents), actual=True))
    if name in FIXED_POLICIES:
        return FixedWarehousePolicy(name, seed), None
    raise ValueError(f"unknown warehouse policy {name!r}; expected one of {WAREHOUSE_POLICIES}")


# --- evaluation --------------------------------------------------------------

def test_env(spec: InstanceSpec, demand: DemandTrace, forecast: ForecastTrace, coupled: bool = True) -> InventoryEnv:
    return InventoryEnv(spec, demand.w, forecast.w_hat, coupled=coupled, start=demand.split,
                        stop=demand.periods)


def _components(res: EpisodeResult) -> dict:
    bd = res.breakdowns
    return {name: np.mean([getattr(b, name) for b in bd], axis=0)
            for name in ("out_of_stock", "wastage", "spread", "capacity_penalty")}


def evaluate_pair(spec, demand, forecast, store_policy: str, warehouse_policy: str, store_agents=None,
                  warehouse_agent=None, weights: RewardWeights = RewardWeights(), seed: int = 0,
                  keep_outcomes: bool = False) -> tuple[EvalRow, EpisodeResult]:
    """One greedy coupled episode over the test split."""
    stores = make_store_policy(store_policy, store_agents)
    wh, estimator = make_warehouse_policy(warehouse_policy, store_policy, store_agents, warehouse_agent, seed)
    res = run_episode(test_env(spec, demand, forecast), stores, wh, weights, estimator,
                      keep_outcomes=keep_outcomes)
    row = EvalRow(store_policy, warehouse_policy, res.warehouse_mean(), res.store_mean(), _components(res))
    return row, res


def evaluate(spec: InstanceSpec, demand: DemandTrace, forecast: ForecastTrace, pairs, store_agents=None,
             warehouse_agent=None, weights: RewardWeights = RewardWeights(), seed: int = 0) -> EvalReport:
    """Evaluate each ``(store_policy, warehouse_policy)`` pair on the test split."""
    rows = [evaluate_pair(spec, demand, forecast, sp, wp, store_agents, warehouse_agent, weights, seed)[0]
            for sp, wp in pairs]
    return EvalReport(rows, spec_hash(spec), seed)


def default_pairs(with_rl: bool = True) -> list:
    """Table layout: matching store/warehouse policies, then every warehouse rule under one store policy."""
    base = ["heuristic", "clairvoyant"] + (["rl"] if with_rl else [])
    pairs = [(p, p) for p in base]
    stores = "rl" if with_rl else "heuristic"
    pairs += [(stores, k) for k in ("heuristic", "clairvoyant") + FIXED_POLICIES if (stores, k) not in pairs]
    return pairs


def evaluate_stores_only(spec, demand, forecast, store_policy, weights: RewardWeights = RewardWeights()) -> np.ndarray:
    """Per-store test reward with an unlimited warehouse."""
    res = run_episode(test_env(spec, demand, forecast, coupled=False), store_policy, weights=weights)
    return res.store_mean()


# --- capacity sweep ----------------------------------------------------------

def capacity_sweep(spec: InstanceSpec, demand: DemandTrace, forecast: ForecastTrace, store: int, volumes,
                   weights: RewardWeights = RewardWeights()) -> list:
    """Test reward of the heuristic and its clairvoyant variant per truck volume of ``store``.

    Returns rows ``(volume, heuristic, clairvoyant)``; the warehouse is
    unlimited so only the truck constraint matters.
    """
    volumes = [float(v) for v in volumes]
    if len(volumes) < 2:
        raise ValueError("capacity sweep needs at least two volumes")
    rows = []
    for v in volumes:
        trucks = spec.truck_volume.copy()
        trucks[store] = v
        s = with_truck_volumes(spec, trucks)
        out = [v]
        for name in ("heuristic", "clairvoyant"):
            out.append(float(evaluate_stores_only(s, demand, forecast, make_store_policy(name), weights)[store]))
        rows.append(tuple(out))
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["volume", "heuristic", "clairvoyant"])
    for v, h, c in rows:
        w.writerow([repr(v), f"{h:.6f}", f"{c:.6f}"])
    return buf.getvalue()


# --- policy heatmap ----------------------------------------------------------

def policy_heatmap(agent: ActorCritic, inventory, forecast, waste: float = 0.0, unit_volume: float = 1.0,
                   forecast_volume: float = 1.0) -> np.ndarray:
    """Argmax action level over an inventory x forecast grid.

    Rows follow ``inventory`` and columns ``forecast``; the remaining
    features are held at the given values.
    """
    inv = np.asarray(inventory, dtype=float)
    fc = np.asarray(forecast, dtype=float)
    X, F = np.meshgrid(inv, fc, indexing="ij")
    obs = np.stack([X, F, np.full_like(X, waste), np.full_like(X, unit_volume), np.full_like(X, forecast_volume)],
                   axis=-1)
    assert obs.shape[-1] == len(STORE_FEATURES)
    idx = agent.policy(obs.reshape(-1, obs.shape[-1])).argmax(axis=-1)
    return ACTION_LEVELS[idx].reshape(X.shape)


def store_heatmap(agent: ActorCritic, spec: InstanceSpec, forecast: ForecastTrace, store: int, size: int = 21):
    """Heatmap of ``agent`` with the other features at their typical values for ``store``.

    Forecasts span zero to the 99th percentile of the store's forecasts.
    Returns ``(grid, inventory_axis, forecast_axis)``.
    """
    inventory = np.linspace(0.0, 1.0, size)
    fc = np.linspace(0.0, float(np.quantile(forecast.w_hat[:, store], 0.99)), size)
    vol = float(spec.unit_volume.mean() / agent.metadata["volume_ref"])
    agg = float(((spec.store_volume[store] * forecast.w_hat[:, store]).sum(axis=1) / spec.truck_volume[store]).mean())
    return policy_heatmap(agent, inventory, fc, unit_volume=vol, forecast_volume=agg), inventory, fc


def heatmap_csv(grid: np.ndarray, inventory, forecast) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["inventory\\forecast"] + [repr(float(f)) for f in forecast])
    for x, row in zip(inventory, grid):
        w.writerow([repr(float(x))] + [repr(float(v)) for v in row])
    return buf.getvalue()


def heatmap_corners(grid: np.ndarray, frac: float = 0.25) -> tuple[float, float]:
    """Mean level in the (low inventory, high forecast) and (high inventory, low forecast) corners."""
    n_i, n_f = grid.shape
    ki = max(1, int(round(frac * n_i)))
    kf = max(1, int(round(frac * n_f)))
    return float(grid[:ki, -kf:].mean()), float(grid[-ki:, :kf].mean())


# --- transfer ----------------------------------------------------------------

def more_products(spec: InstanceSpec, n_products: int, seed: int) -> InstanceSpec:
    """Extend ``spec`` with new products and scale truck volumes with total product volume.

    The original products keep their attributes; the extra ones are drawn
    from the same distributions as the instance builder.
    """
    if n_products < spec.n_products:
        raise ValueError("transfer target must have at least as many products")
    rng = np.random.default_rng([seed, 7920])
    extra = tuple(
        ProductSpec(
            unit_volume=float(rng.lognormal(np.log(1e4), 0.5)),
            shelf_life=int(rng.integers(12, 41)),
            fixed_cost=float(rng.uniform(0.15, 0.35)),
            variable_cost=float(rng.uniform(0.05, 0.15)),
            base_rate=float(rng.lognormal(0.0, 0.8)),
        )
        for _ in range(n_products - spec.n_products)
    )
    new = replace(spec, products=spec.products + extra)
    ratio = (new.store_volume * new.expected_demand()).sum(axis=1) / \
        (spec.store_volume * spec.expected_demand()).sum(axis=1)
    return with_truck_volumes(new, spec.truck_volume * ratio)


def added_store(spec: InstanceSpec, template: int = 0) -> InstanceSpec:
    """Attach one more store copied from store ``template`` and renormalize the scales."""
    stores = spec.stores + (spec.stores[template],)
    weights = np.array([s.shelf_capacity for s in stores])
    scales = weights / weights.sum()
    return replace(spec, stores=tuple(replace(s, scale=float(a)) for s, a in zip(stores, scales)))


@dataclass
class TransferResult:
    report: EvalReport
    checksums_before: str
    checksums_after: str
    spec: InstanceSpec

    @property
    def unchanged(self) -> bool:
        return self.checksums_before == self.checksums_after


def _agent_checksum(store_agents, warehouse_agent) -> str:
    nets = [n for a in store_agents for n in (a.actor, a.critic)]
    if warehouse_agent is not None:
        nets += [warehouse_agent.actor, warehouse_agent.critic]
    return checksum(nets)


def transfer_experiment(kind: str, spec: InstanceSpec, store_agents, warehouse_agent=None, n_products: int | None = None,
                        template: int = 0, forecast_r: float | None = None, seed: int = 0,
                        weights: RewardWeights = RewardWeights()) -> TransferResult:
    """Evaluate unchanged agents on a larger instance.

    ``more_products`` grows the catalogue to ``n_products``; ``added_store``
    adds a store driven by a copy of agent ``template``.  Fresh traces are
    generated for the new instance.
    """
    before = _agent_checksum(store_agents, warehouse_agent)
    agents = list(store_agents)
    if kind == "more_products":
        if n_products is None:
            raise ValueError("more_products needs n_products")
        new = more_products(spec, n_products, seed)
    elif kind == "added_store":
        if not 0 <= template < len(agents):
            raise ValueError(f"template store {template} out of range")
        new = added_store(spec, template)
        agents.append(agents[template])
    else:
        raise ValueError(f"unknown transfer kind {kind!r}")
    for a in agents:
        if a.metadata.get("kind") != "store":
            raise ValueError("store agents expected")
    r = spec.demand.forecast_r if forecast_r is None else forecast_r
    demand = generate_demand(new, seed)
    forecast = generate_forecast(demand, r, seed)
    pairs = [("heuristic", "heuristic"), ("clairvoyant", "clairvoyant")]
    if warehouse_agent is not None:
        pairs.append(("rl", "rl"))
    pairs.append(("rl", "heuristic"))
    report = evaluate(new, demand, forecast, pairs, agents, warehouse_agent, weights, seed)
    return TransferResult(report, before, _agent_checksum(store_agents, warehouse_agent), new)


# --- per-period components ---------------------------------------------------

COMPONENT_COLUMNS = ["t", "store", "reward", "out_of_stock", "wastage", "spread", "capacity_penalty", "rho"]


def components_csv(res: EpisodeResult) -> str:
    """Per-period, per-store reward breakdown of an episode run with ``keep_outcomes``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPONENT_COLUMNS)
    for k, (b, out) in enumerate(zip(res.breakdowns, res.outcomes)):
        for j in range(len(b.spread)):
            w.writerow([out.t, j + 1, f"{res.store_rewards[k, j].mean():.6f}", f"{b.out_of_stock[j]:.6f}",
                        f"{b.wastage[j]:.6f}", f"{b.spread[j]:.6f}", f"{b.capacity_penalty[j]:.6f}",
                        f"{out.rho[j]:.6f}"])
    return buf.getvalue()
