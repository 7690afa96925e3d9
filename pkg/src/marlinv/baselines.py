"""Non-learning policies: the constant-inventory heuristic, its clairvoyant
variant, and fixed warehouse ordering rules."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim import InventoryEnv

FIXED_POLICIES = ("all_ones", "all_zeros", "alternate", "random")


@dataclass(frozen=True)
class HeuristicConfig:
    target: float = 0.25
    clairvoyant: bool = False

    def __post_init__(self):
        if not 0.0 <= self.target <= 1.0:
            raise ValueError(f"target inventory must be in [0, 1], got {self.target}")


def heuristic_store_action(inventory, expected_sales, target=0.25) -> np.ndarray:
    """Order up to ``target`` plus the expected sales, never negative."""
    u = np.asarray(target) + np.asarray(expected_sales) - np.asarray(inventory)
    return np.clip(u, 0.0, 1.0)


def heuristic_warehouse_action(chi_hat, demand_hat) -> np.ndarray:
    """Order a product when projected stock will not cover the next cycle's demand."""
    return (np.asarray(chi_hat) < np.asarray(demand_hat)).astype(int)


def fixed_warehouse_policy(kind: str, period: int, n_products: int, rng=None) -> np.ndarray:
    """``period`` counts warehouse decisions from the start of the episode."""
    if kind == "all_ones":
        return np.ones(n_products, dtype=int)
    if kind == "all_zeros":
        return np.zeros(n_products, dtype=int)
    if kind == "alternate":
        return np.full(n_products, int(period % 2 == 0))
    if kind == "random":
        return (rng.random(n_products) < 0.5).astype(int)
    raise ValueError(f"unknown warehouse policy {kind!r}; expected one of {FIXED_POLICIES}")


class HeuristicStorePolicy:
    def __init__(self, cfg: HeuristicConfig = HeuristicConfig()):
        self.cfg = cfg

    def act(self, env: InventoryEnv) -> np.ndarray:
        t = env.state.t
        expected = env.sales[t] if self.cfg.clairvoyant else env.forecast[t]
        return heuristic_store_action(env.state.store.sum(axis=-1), expected, self.cfg.target)


class HeuristicWarehousePolicy:
    """Uses the projections of a rollout; clairvoyance is decided by the estimator."""

    needs_estimates = True

    def decide(self, env: InventoryEnv, est) -> np.ndarray:
        return heuristic_warehouse_action(est.chi_hat, est.demand_hat)


class FixedWarehousePolicy:
    needs_estimates = False

    def __init__(self, kind: str, seed: int = 0):
        if kind not in FIXED_POLICIES:
            raise ValueError(f"unknown warehouse policy {kind!r}; expected one of {FIXED_POLICIES}")
        self.kind = kind
        self.rng = np.random.default_rng([seed, 4242])

    def decide(self, env: InventoryEnv, est) -> np.ndarray:
        period = (env.state.t - env.start) // env.cycle
        return fixed_warehouse_policy(self.kind, period, env.spec.n_products, self.rng)
