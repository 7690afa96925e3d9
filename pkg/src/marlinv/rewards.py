"""Store and warehouse costs, the per-agent rewards, and the system return."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim import EMPTY_TOL, StepOutcome


@dataclass(frozen=True)
class RewardWeights:
    alpha: float = 0.5  # capacity-exceedance penalty
    alpha1: float = 1.0  # refused store orders
    alpha2: float = 0.1  # share of store reward given to the warehouse
    g1: float = 1.0
    g2: float = 1.0
    gamma: float = 0.99

    def __post_init__(self):
        if min(self.alpha, self.alpha1, self.alpha2, self.g1, self.g2) < 0:
            raise ValueError("reward weights must be non-negative")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")


@dataclass
class StoreBreakdown:
    """Reward terms for every store in one period; arrays are (S,) unless noted."""

    out_of_stock: np.ndarray  # fraction of products empty
    wastage: np.ndarray  # mean waste per product
    spread: np.ndarray
    capacity_penalty: np.ndarray
    empty: np.ndarray  # (S, P) bool
    item_rewards: np.ndarray  # (S, P)

    @property
    def cost(self) -> np.ndarray:
        return self.out_of_stock + self.wastage + self.spread


def percentile_spread(x: np.ndarray) -> np.ndarray:
    """95th minus 5th percentile over the last axis (linear interpolation)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == 0:
        raise ValueError("percentile spread of an empty vector")
    lo, hi = np.percentile(x, [5.0, 95.0], axis=-1)
    return hi - lo


def empty_flags(inventory_end: np.ndarray) -> np.ndarray:
    return inventory_end <= EMPTY_TOL


def store_cost(outcome: StepOutcome, j: int) -> float:
    x = outcome.inventory_end[j]
    P = x.shape[0]
    return float(empty_flags(x).sum() / P + outcome.store_waste[j].sum() / P + percentile_spread(x))


def store_rewards(outcome: StepOutcome, weights: RewardWeights) -> StoreBreakdown:
    """Per-product rewards of every store for the period in ``outcome``."""
    x = outcome.inventory_end
    empty = empty_flags(x)
    spread = percentile_spread(x)
    penalty = weights.alpha * (outcome.rho - 1.0)
    items = 1.0 - empty - outcome.store_waste - (spread + penalty)[:, None]
    return StoreBreakdown(
        out_of_stock=empty.mean(axis=1),
        wastage=outcome.store_waste.mean(axis=1),
        spread=spread,
        capacity_penalty=penalty,
        empty=empty,
        item_rewards=items,
    )


def store_item_reward(empty: bool, waste: float, spread: float, rho: float, weights: RewardWeights) -> float:
    """Scalar form of the per-product store reward."""
    return 1.0 - float(empty) - waste - spread - weights.alpha * (rho - 1.0)


def warehouse_cost_terms(b, mu, waste, fixed_cost, variable_cost) -> np.ndarray:
    """Per-product warehouse cost; the warehouse cost is their mean."""
    b = np.asarray(b, dtype=float)
    return np.asarray(waste, dtype=float) + b * (fixed_cost + np.asarray(mu, dtype=float) * variable_cost)


def warehouse_cost(b, mu, waste, fixed_cost, variable_cost) -> float:
    return float(warehouse_cost_terms(b, mu, waste, fixed_cost, variable_cost).mean())


def warehouse_reward(cost_i, refused_i, store_reward_sum_i, weights: RewardWeights):
    """Per-product warehouse reward; inputs broadcast."""
    return 1.0 - cost_i - weights.alpha1 * refused_i + weights.alpha2 * store_reward_sum_i


def system_return(warehouse_costs, store_costs, weights: RewardWeights) -> float:
    """Discounted weighted cost from the first period of the streams onward.

    ``warehouse_costs`` is zero outside decision periods; ``store_costs`` is
    already summed over stores.
    """
    wc = np.asarray(warehouse_costs, dtype=float)
    sc = np.asarray(store_costs, dtype=float)
    disc = weights.gamma ** np.arange(len(sc))
    return float((disc * (weights.g1 * wc + weights.g2 * sc)).sum())
