"""Episode runner, warehouse estimators and the two-stage training curriculum.

Stage one trains every store agent against an unlimited warehouse.  Stage
two freezes the stores (they act greedily) and trains the warehouse agent in
the coupled environment; its projected-inventory and store-demand features
come from a rollout on a private clone of the live environment.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .agents import (ActorCritic, RLStorePolicy, RLWarehousePolicy, Transitions, make_store_agent,
                     make_warehouse_agent, projected_inventory, train_store_batch, train_warehouse_batch,
                     warehouse_observe, WAREHOUSE_ACTOR_UPDATES)
from .baselines import HeuristicWarehousePolicy
from .demand import DemandTrace, ForecastTrace, aggregate_store_demand
from .instance import InstanceSpec
from .rewards import RewardWeights, store_rewards, warehouse_cost_terms, warehouse_reward
from .sim import InventoryEnv, expiring_quantity

log = logging.getLogger(__name__)

CURRICULA = ("independent", "coupled", "shared")


@dataclass(frozen=True)
class TrainConfig:
    update_every: int = 5  # episodes of experience per training step
    batch_steps: int = 128  # time steps per minibatch (all products included)
    epochs: int = 40  # passes over the collected experience per update
    window: int = 50
    threshold: float = 1e-4
    min_episodes: int = 50
    max_episodes: int = 200
    lr: float = 1e-3
    hidden: int = 32
    exploration: str = "multinomial"
    epsilon_start: float = 1.0
    epsilon_end: float = 0.0
    advantage_scale: float | None = None  # actor target uses advantages rescaled to this std
    warehouse_actor: str = "bounded"  # or "likelihood"; see agents.train_warehouse_batch
    curriculum: str = "independent"
    reward_share: float = 0.1  # warehouse reward share given to stores under "shared"
    seed: int = 0

    def __post_init__(self):
        for name in ("update_every", "batch_steps", "epochs", "window",
                     "max_episodes", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.threshold > 0:
            raise ValueError("threshold must be > 0")
        if self.exploration not in ("multinomial", "epsilon_greedy"):
            raise ValueError(f"unknown exploration mode {self.exploration!r}")
        if self.warehouse_actor not in WAREHOUSE_ACTOR_UPDATES:
            raise ValueError(f"unknown warehouse actor update {self.warehouse_actor!r}")
        if self.curriculum not in CURRICULA:
            raise ValueError(f"unknown curriculum {self.curriculum!r}")


@dataclass
class TrainLog:
    """Append-only per-episode log."""

    rows: list = field(default_factory=list)
    converged: dict = field(default_factory=dict)  # agent name -> episode index or None

    def append(self, **row):
        self.rows.append(row)

    def rewards(self, agent: str) -> list:
        return [r["reward"] for r in self.rows if r["agent"] == agent]

    def to_csv(self, path) -> None:
        keys = []
        for r in self.rows:
            keys += [k for k in r if k not in keys]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def convergence_check(history, window: int = 50, threshold: float = 1e-4) -> bool:
    """True when the population variance of the last ``window`` values is below ``threshold``."""
    if len(history) < window:
        return False
    return float(np.var(np.asarray(history[-window:], dtype=float))) < threshold


# --- warehouse estimators ----------------------------------------------------

@dataclass
class Estimates:
    chi: np.ndarray  # current warehouse stock
    chi_hat: np.ndarray  # projected stock when the order lands
    demand_hat: np.ndarray  # store orders over the cycle after that
    waste_hat: np.ndarray  # warehouse stock expected to spoil over that cycle


def rollout_estimates(env: InventoryEnv, store_policy, actual: bool = False) -> Estimates:
    """Project the warehouse two cycles ahead on a clone of ``env``.

    The clone serves forecast demand (realized demand when ``actual``), places
    no vendor order, and lets ``store_policy`` act.  Over the first cycle the
    warehouse supplies the stores as usual; over the second it is treated as
    unlimited so the requests measure what stores would ask for.
    """
    n = env.cycle
    sim = env.clone()
    sim.stop = env.sales.shape[0]
    if not actual:
        sim.sales = env.forecast
    chi = env.state.warehouse.sum(axis=-1)
    no_order = np.zeros(env.spec.n_products, dtype=int)
    for _ in range(n):
        if sim.done:
            break
        sim.step(store_policy.act(sim), no_order if sim.decision_due() else None)
    chi_hat = sim.state.warehouse.sum(axis=-1)
    sim.coupled = False
    demand = np.zeros(env.spec.n_products)
    for _ in range(n):
        if sim.done:
            break
        out = sim.step(store_policy.act(sim))
        demand += (env.scale[:, None] * out.requested).sum(axis=0)
    demand = np.clip(demand, 0.0, 1.0)
    waste = np.maximum(0.0, expiring_quantity(sim.state.warehouse, env.shelf_life, n) - demand)
    return Estimates(chi, chi_hat, demand, waste)


class RolloutEstimator:
    def __init__(self, store_policy, actual: bool = False):
        self.store_policy = store_policy
        self.actual = actual

    def __call__(self, env: InventoryEnv) -> Estimates:
        return rollout_estimates(env, self.store_policy, self.actual)


class ForecastEstimator:
    """Cheap estimator from aggregated store forecasts, without a rollout."""

    def __call__(self, env: InventoryEnv) -> Estimates:
        t, n, T = env.state.t, env.cycle, env.forecast.shape[0]
        chi = env.state.warehouse.sum(axis=-1)
        first = aggregate_store_demand(env.forecast, t, min(t + n, T), env.scale)
        second = aggregate_store_demand(env.forecast, min(t + n, T - 1), min(t + 2 * n, T), env.scale)
        chi_hat = projected_inventory(chi, first)
        waste = np.maximum(0.0, expiring_quantity(env.state.warehouse, env.shelf_life, 2 * n) - first - second)
        return Estimates(chi, chi_hat, second, waste)


# --- episode runner ----------------------------------------------------------

@dataclass
class EpisodeResult:
    store_rewards: np.ndarray  # (T, S, P)
    breakdowns: list
    outcomes: list
    store_obs: np.ndarray = None  # (T, S, P, 5)
    store_actions: np.ndarray = None  # (T, S, P)
    decision_t: np.ndarray = None  # (D,)
    warehouse_obs: np.ndarray = None  # (D, P, 5)
    warehouse_actions: np.ndarray = None  # (D, P)
    warehouse_cost: np.ndarray = None  # (D, P) per-product cost at each decision
    warehouse_refused: np.ndarray = None  # (D, P) refused over the delayed window
    warehouse_share: np.ndarray = None  # (D, P) sum over stores of mean store reward
    warehouse_rewards: np.ndarray = None  # (D, P); only decisions with a complete window

    def store_mean(self) -> np.ndarray:
        return self.store_rewards.mean(axis=(0, 2))

    def warehouse_mean(self) -> float:
        if self.warehouse_rewards is None or self.warehouse_rewards.size == 0:
            return float("nan")
        return float(self.warehouse_rewards.mean())


def run_episode(env: InventoryEnv, store_policy, warehouse_policy=None, weights: RewardWeights = RewardWeights(),
                estimator=None, collect_store: bool = False, store_modes=None, keep_outcomes: bool = False,
                reset: bool = True) -> EpisodeResult:
    """Run ``env`` from its start to its stop with the given policies.

    Every training and evaluation path goes through here, so rewards seen by
    the trainers and reported by the evaluator are computed identically.
    """
    if reset:
        env.reset()
    n = env.cycle
    start = env.state.t
    spec = env.spec
    rewards, breakdowns, outcomes = [], [], []
    obs_log, act_log = [], []
    refused = []
    d_t, d_obs, d_b, d_cost = [], [], [], []
    wh_waste = np.zeros(spec.n_products)
    fixed, variable = spec.fixed_cost, spec.variable_cost
    while not env.done:
        b = None
        if env.decision_due():
            est = estimator(env) if getattr(warehouse_policy, "needs_estimates", False) else None
            b = warehouse_policy.decide(env, est)
            obs = getattr(warehouse_policy, "last_obs", None)
            if obs is None and est is not None:
                obs = warehouse_observe(est.chi, est.chi_hat, est.demand_hat, est.waste_hat)
            d_t.append(env.state.t)
            d_obs.append(obs)
            d_b.append(np.asarray(b, dtype=int))
        if store_modes is not None:
            u = store_policy.act(env, store_modes)
        else:
            u = store_policy.act(env)
        if collect_store:
            obs_log.append(store_policy.last_obs)
            act_log.append(store_policy.last_actions)
        out = env.step(u, b)
        if out.order is not None:
            d_cost.append(warehouse_cost_terms(out.order, out.order_qty, wh_waste, fixed, variable))
        if out.warehouse_waste is not None:
            wh_waste = out.warehouse_waste
        br = store_rewards(out, weights)
        rewards.append(br.item_rewards)
        breakdowns.append(br)
        refused.append(out.refused)
        if keep_outcomes:
            outcomes.append(out)

    res = EpisodeResult(np.array(rewards), breakdowns, outcomes)
    if collect_store:
        res.store_obs = np.array(obs_log)
        res.store_actions = np.array(act_log)
    if d_t:
        res.decision_t = np.array(d_t)
        res.warehouse_actions = np.array(d_b)
        res.warehouse_cost = np.array(d_cost)
        if all(o is not None for o in d_obs):
            res.warehouse_obs = np.array(d_obs)
        refused = np.array(refused)
        P = spec.n_products
        D = len(d_t)
        win_refused = np.zeros((D, P))
        win_share = np.zeros((D, P))
        complete = np.zeros(D, dtype=bool)
        for k, t in enumerate(d_t):
            lo, hi = t + n - start, t + 2 * n - start
            if hi <= len(rewards):
                complete[k] = True
                win_refused[k] = refused[lo:hi].sum(axis=0)
                win_share[k] = res.store_rewards[lo:hi].mean(axis=0).sum(axis=0)
        res.warehouse_refused = win_refused
        res.warehouse_share = win_share
        res.warehouse_rewards = warehouse_reward(res.warehouse_cost, win_refused, win_share, weights)[complete]
    return res


# --- stage one: stores -------------------------------------------------------

def _all_transitions(episodes) -> Transitions:
    """Flatten ``(obs, actions, rewards)`` episodes into per-product rows.

    Each episode holds arrays indexed by step, with one row per product in
    every step.  The last step of an episode is terminal.
    """
    obs, act, rew, nxt, term = [], [], [], [], []
    for o, a, r in episodes:
        n = len(r)
        obs.append(o[:n])
        act.append(a[:n])
        rew.append(r)
        nxt.append(np.concatenate([o[1:n], o[n - 1:n]]))
        t = np.zeros(np.shape(r))
        t[-1] = 1.0
        term.append(t)
    def flat(xs):
        return np.concatenate([x.reshape(-1, *x.shape[2:]) for x in xs])

    return Transitions(flat(obs), flat(act), flat(rew), flat(nxt), flat(term))


def epsilon_at(cfg: TrainConfig, episode: int) -> float:
    frac = min(1.0, episode / max(1, cfg.max_episodes - 1))
    return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)


def default_value_scale(weights: RewardWeights) -> float:
    return 1.0 / (1.0 - weights.gamma)


def train_stores(spec: InstanceSpec, demand: DemandTrace, forecast: ForecastTrace, cfg: TrainConfig = TrainConfig(),
                 weights: RewardWeights = RewardWeights(), agents=None, stores=None, callback=None):
    """Train one agent per store on the training split; returns ``(agents, TrainLog)``.

    ``stores`` restricts training to a subset (the others act greedily and
    are not updated).  Stops per store on convergence or at ``max_episodes``.
    """
    S = spec.n_stores
    volume_ref = float(spec.unit_volume.mean())
    vscale = default_value_scale(weights)
    if agents is None:
        agents = [make_store_agent(j, np.random.default_rng([cfg.seed, 100 + j]), volume_ref, cfg.lr,
                                   cfg.hidden, vscale) for j in range(S)]
    act_rngs = [np.random.default_rng([cfg.seed, 200 + j]) for j in range(S)]
    batch_rngs = [np.random.default_rng([cfg.seed, 300 + j]) for j in range(S)]
    coupled = cfg.curriculum != "independent"
    env = InventoryEnv(spec, demand.w, forecast.w_hat, coupled=coupled, start=0, stop=demand.split)
    policy = RLStorePolicy(agents, cfg.exploration, act_rngs)
    wh_policy = HeuristicWarehousePolicy() if coupled else None
    estimator = ForecastEstimator() if coupled else None

    training = [stores is None or j in stores for j in range(S)]
    trainlog = TrainLog(converged={f"store{j}": None for j in range(S) if training[j]})
    history = [[] for _ in range(S)]
    buffers = [[] for _ in range(S)]
    for ep in range(cfg.max_episodes):
        if not any(training):
            break
        policy.epsilon = epsilon_at(cfg, ep)
        modes = [cfg.exploration if training[j] else "argmax" for j in range(S)]
        res = run_episode(env, policy, wh_policy, weights, estimator, collect_store=True, store_modes=modes)
        rewards = res.store_rewards
        if cfg.curriculum == "shared" and res.warehouse_rewards is not None and res.warehouse_rewards.size:
            rewards = rewards + cfg.reward_share * res.warehouse_rewards.mean()
        means = res.store_mean()
        for j in range(S):
            if not training[j]:
                continue
            bd = res.breakdowns
            trainlog.append(episode=ep, agent=f"store{j}", reward=float(means[j]),
                            out_of_stock=float(np.mean([b.out_of_stock[j] for b in bd])),
                            wastage=float(np.mean([b.wastage[j] for b in bd])),
                            spread=float(np.mean([b.spread[j] for b in bd])),
                            capacity_penalty=float(np.mean([b.capacity_penalty[j] for b in bd])),
                            epsilon=policy.epsilon if cfg.exploration == "epsilon_greedy" else 0.0)
            history[j].append(float(means[j]))
            buffers[j].append((res.store_obs[:, j], res.store_actions[:, j], rewards[:, j]))
        if (ep + 1) % cfg.update_every == 0:
            for j in range(S):
                if training[j] and buffers[j]:
                    train_store_batch(agents[j], _all_transitions(buffers[j]), weights.gamma, cfg.epochs,
                                      cfg.batch_steps * spec.n_products, batch_rngs[j], cfg.advantage_scale)
                    buffers[j] = []
        for j in range(S):
            if training[j] and len(history[j]) >= cfg.min_episodes and \
                    convergence_check(history[j], cfg.window, cfg.threshold):
                training[j] = False
                trainlog.converged[f"store{j}"] = ep
                log.info("store %d converged at episode %d (reward %.4f)", j, ep, history[j][-1])
        if callback is not None:
            callback(ep, means)
    return agents, trainlog


# --- stage two: warehouse ----------------------------------------------------

def rl_system(store_agents, warehouse_agent: ActorCritic | None = None, mode: str = "argmax", rng=None):
    """Greedy frozen stores, a rollout estimator over them, and the warehouse policy."""
    stores = RLStorePolicy(store_agents, "argmax")
    estimator = RolloutEstimator(RLStorePolicy(store_agents, "argmax"))
    wh = RLWarehousePolicy(warehouse_agent, mode, rng) if warehouse_agent is not None else None
    return stores, wh, estimator


def train_warehouse(spec: InstanceSpec, demand: DemandTrace, forecast: ForecastTrace, store_agents,
                    cfg: TrainConfig = TrainConfig(), weights: RewardWeights = RewardWeights(),
                    agent: ActorCritic | None = None, callback=None):
    """Train the warehouse agent against frozen greedy store agents."""
    if agent is None:
        agent = make_warehouse_agent(np.random.default_rng([cfg.seed, 500]), cfg.lr, cfg.hidden,
                                     default_value_scale(weights))
    act_rng = np.random.default_rng([cfg.seed, 501])
    batch_rng = np.random.default_rng([cfg.seed, 502])
    env = InventoryEnv(spec, demand.w, forecast.w_hat, coupled=True, start=0, stop=demand.split)
    stores, wh_policy, estimator = rl_system(store_agents, agent, cfg.exploration, act_rng)
    trainlog = TrainLog(converged={"warehouse": None})
    history, buffer = [], []
    for ep in range(cfg.max_episodes):
        wh_policy.epsilon = epsilon_at(cfg, ep)
        res = run_episode(env, stores, wh_policy, weights, estimator)
        m = res.warehouse_mean()
        D = len(res.warehouse_rewards)
        history.append(m)
        trainlog.append(episode=ep, agent="warehouse", reward=m,
                        cost=float(res.warehouse_cost[:D].mean()),
                        refused=float(res.warehouse_refused[:D].mean()),
                        store_share=float(res.warehouse_share[:D].mean()),
                        order_rate=float(res.warehouse_actions[:D].mean()),
                        **{f"store{j}": float(v) for j, v in enumerate(res.store_mean())})
        buffer.append((res.warehouse_obs[:D], res.warehouse_actions[:D], res.warehouse_rewards))
        if (ep + 1) % cfg.update_every == 0:
            train_warehouse_batch(agent, _all_transitions(buffer), weights.gamma, cfg.epochs,
                                  cfg.batch_steps * spec.n_products, batch_rng, cfg.warehouse_actor,
                                  cfg.advantage_scale)
            buffer = []
        if callback is not None:
            callback(ep, m)
        if len(history) >= cfg.min_episodes and convergence_check(history, cfg.window, cfg.threshold):
            trainlog.converged["warehouse"] = ep
            log.info("warehouse converged at episode %d (reward %.4f)", ep, m)
            break
    return agent, trainlog


def config_dict(cfg) -> dict:
    return asdict(cfg)
