"""Store and warehouse actor-critic agents.

Every product of a store is handled by the same pair of networks, one
product per row, so an agent works for any number of products.  The store
actor picks one of 14 replenishment levels and is trained towards a
softmax target whose logits are nudged by the advantage, spread over
neighbouring levels.  The warehouse actor makes a binary order decision and
by default uses the same kind of target without the neighbour smoothing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import (AdamState, Bundle, Mlp, adam_step, cross_entropy_loss_and_grad, mse_loss_and_grad,
                 softmax)
from .sim import InventoryEnv, predicted_wastage

ACTION_LEVELS = np.array([0, 0.005, 0.01, 0.0125, 0.015, 0.0175, 0.02, 0.03, 0.04, 0.08, 0.12, 0.2, 0.5, 1.0])

STORE_FEATURES = ("inventory", "forecast", "predicted_waste", "unit_volume", "forecast_volume")
WAREHOUSE_FEATURES = ("inventory", "projected_inventory", "store_demand", "predicted_waste", "empty")

# default input scaling: the forecast-sized features are O(0.01) otherwise
STORE_INPUT_SCALE = (1.0, 10.0, 10.0, 1.0, 1.0)
WAREHOUSE_INPUT_SCALE = (1.0, 1.0, 5.0, 5.0, 1.0)


# --- observations ------------------------------------------------------------

def store_observe(env: InventoryEnv, j: int, volume_ref: float) -> np.ndarray:
    """Feature rows (P, 5) for store ``j`` at the current period."""
    return store_observations(env, volume_ref)[j]


def store_observations(env: InventoryEnv, volume_ref: float) -> np.ndarray:
    """Feature rows for every store, shape (S, P, 5)."""
    st = env.state
    f = env.forecast[st.t]
    x = st.store.sum(axis=-1)
    q_hat = predicted_wastage(st.store, env.shelf_life, f, 1)
    vol = np.broadcast_to(env.spec.unit_volume / volume_ref, x.shape)
    agg = (env.volume * f).sum(axis=1) / env.truck_volume
    return np.stack([x, f, q_hat, vol, np.broadcast_to(agg[:, None], x.shape)], axis=-1)


def warehouse_observe(chi, chi_hat, demand_hat, waste_hat) -> np.ndarray:
    """Feature rows (P, 5) for the warehouse decision."""
    chi = np.asarray(chi, dtype=float)
    empty = (chi <= 1e-12).astype(float)
    return np.stack([chi, np.broadcast_to(chi_hat, chi.shape), np.broadcast_to(demand_hat, chi.shape),
                     np.broadcast_to(waste_hat, chi.shape), empty], axis=-1)


def projected_inventory(chi, store_demand) -> np.ndarray:
    """Warehouse stock left after serving forecast store orders."""
    return np.maximum(0.0, np.asarray(chi) - np.asarray(store_demand))


# --- actions -----------------------------------------------------------------

def action_to_quantity(level_index, inventory, levels=ACTION_LEVELS) -> np.ndarray:
    """Requested quantity: the chosen fraction of the free shelf space."""
    return levels[level_index] * (1.0 - np.asarray(inventory))


def select_action(probs, mode: str = "multinomial", rng=None, epsilon: float = 0.0):
    """Pick an action index per row of ``probs``.

    ``mode`` is ``multinomial`` (sample from probs), ``epsilon_greedy``
    (argmax, or uniform with probability ``epsilon``) or ``argmax`` (ties go
    to the lowest index).
    """
    p = np.asarray(probs, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if (p < -1e-12).any() or not np.allclose(p.sum(axis=-1), 1.0, atol=1e-6):
        raise ValueError("probabilities must be non-negative and sum to 1")
    n, k = p.shape
    if mode == "argmax":
        idx = p.argmax(axis=-1)
    elif mode == "multinomial":
        cum = np.cumsum(p, axis=-1)
        u = rng.random(n)[:, None] * cum[:, -1:]
        idx = np.minimum((cum <= u).sum(axis=-1), k - 1)
    elif mode == "epsilon_greedy":
        idx = p.argmax(axis=-1)
        explore = rng.random(n) < epsilon
        idx = np.where(explore, rng.integers(k, size=n), idx)
    else:
        raise ValueError(f"unknown action selection mode {mode!r}")
    return int(idx[0]) if single else idx


# --- advantage and actor target ---------------------------------------------

def td0_advantage(r, v, v_next, gamma: float, terminal):
    """Returns ``(delta, critic_target)`` for one-step TD."""
    target = np.asarray(r, dtype=float) + gamma * np.asarray(v_next, dtype=float) * (1.0 - np.asarray(terminal, dtype=float))
    return target - v, target


def actor_target_logits(logits, chosen, delta) -> np.ndarray:
    """Shift every logit by ``delta / (|chosen - k| + 1)``.

    ``logits`` is (K,) or (N, K); ``chosen`` and ``delta`` broadcast per row.
    """
    logits = np.asarray(logits, dtype=float)
    k = np.arange(logits.shape[-1])
    chosen = np.asarray(chosen)[..., None]
    delta = np.asarray(delta, dtype=float)[..., None]
    return logits + delta / (np.abs(chosen - k) + 1.0)


# --- agents ------------------------------------------------------------------

@dataclass
class Transitions:
    """Flat batch of per-product transitions."""

    obs: np.ndarray  # (N, F)
    action: np.ndarray  # (N,)
    reward: np.ndarray  # (N,)
    next_obs: np.ndarray  # (N, F)
    terminal: np.ndarray  # (N,)

    def __len__(self):
        return len(self.action)


@dataclass
class LossStats:
    critic_loss: float
    actor_loss: float
    critic_curve: list = field(default_factory=list)
    mean_advantage: float = 0.0


@dataclass
class ActorCritic:
    """Actor/critic pair shared across products, plus input scaling.

    The critic predicts values in units of ``value_scale`` so its output
    stays O(1) for discount factors near one.
    """

    actor: Mlp
    critic: Mlp
    actor_opt: AdamState
    critic_opt: AdamState
    input_scale: np.ndarray
    value_scale: float = 1.0
    metadata: dict = field(default_factory=dict)

    def _in(self, obs):
        return np.asarray(obs, dtype=float) * self.input_scale

    def policy(self, obs) -> np.ndarray:
        return softmax(self.actor.logits(self._in(obs)))

    def logits(self, obs) -> np.ndarray:
        return self.actor.logits(self._in(obs))

    def value(self, obs) -> np.ndarray:
        return self.value_scale * self.critic.logits(self._in(obs))[..., 0]

    def to_bundle(self) -> Bundle:
        meta = dict(self.metadata)
        meta.update(input_scale=list(map(float, self.input_scale)), value_scale=self.value_scale)
        return Bundle({"actor": self.actor, "critic": self.critic},
                      {"actor": self.actor_opt, "critic": self.critic_opt}, meta)

    @classmethod
    def from_bundle(cls, bundle: Bundle) -> "ActorCritic":
        meta = dict(bundle.metadata)
        actor, critic = bundle.nets["actor"], bundle.nets["critic"]
        opts = bundle.optimizers
        return cls(actor, critic,
                   opts.get("actor") or AdamState.for_net(actor),
                   opts.get("critic") or AdamState.for_net(critic),
                   np.array(meta.pop("input_scale"), dtype=float), meta.pop("value_scale"), meta)


def _make(sizes_actor, sizes_critic, rng, lr, input_scale, value_scale, metadata) -> ActorCritic:
    actor = Mlp(sizes_actor, "softmax", rng=rng, output_gain=0.1)
    critic = Mlp(sizes_critic, "linear", rng=rng, output_gain=0.1)
    return ActorCritic(actor, critic, AdamState.for_net(actor, lr), AdamState.for_net(critic, lr),
                       np.array(input_scale, dtype=float), value_scale, metadata)


def make_store_agent(store: int, rng, volume_ref: float, lr: float = 1e-3, hidden: int = 32,
                     value_scale: float = 1.0) -> ActorCritic:
    return _make([5, hidden, hidden, hidden, len(ACTION_LEVELS)], [5, hidden, 1], rng, lr,
                 STORE_INPUT_SCALE, value_scale,
                 {"kind": "store", "store": store, "volume_ref": float(volume_ref),
                  "action_levels": ACTION_LEVELS.tolist(), "features": list(STORE_FEATURES)})


def make_warehouse_agent(rng, lr: float = 1e-3, hidden: int = 32, value_scale: float = 1.0) -> ActorCritic:
    return _make([5, hidden, hidden, 2], [5, hidden, 1], rng, lr, WAREHOUSE_INPUT_SCALE, value_scale,
                 {"kind": "warehouse", "features": list(WAREHOUSE_FEATURES)})


def warm_start_critic(agent: ActorCritic, rewards, gamma: float) -> None:
    """Set the critic's output bias so it predicts the discounted value of the mean reward.

    An untrained critic says zero while true values sit near ``r / (1 - gamma)``,
    which would make every early advantage positive and let the actor drift.
    """
    agent.critic.biases[-1][:] = float(np.mean(rewards)) / ((1.0 - gamma) * agent.value_scale)


def _advantages(agent: ActorCritic, batch: Transitions, gamma: float):
    if agent.critic_opt.step == 0:
        warm_start_critic(agent, batch.reward, gamma)
    v = agent.value(batch.obs)
    v_next = agent.value(batch.next_obs)
    return td0_advantage(batch.reward, v, v_next, gamma, batch.terminal)


def _minibatches(n: int, size: int, rng):
    order = np.arange(n) if rng is None else rng.permutation(n)
    for k in range(0, n, size):
        yield order[k:k + size]


def _fit(agent: ActorCritic, x, critic_y, actor_target, actor_weight, epochs: int, batch_rows: int, rng):
    """Minibatch Adam on fixed critic and actor targets; returns the per-epoch losses."""
    critic_curve, actor_curve = [], []
    fit_actor = actor_weight is None or np.any(actor_weight != 0)
    for _ in range(epochs):
        c_loss = a_loss = 0.0
        for idx in _minibatches(len(x), batch_rows, rng):
            loss, g = mse_loss_and_grad(agent.critic, x[idx], critic_y[idx])
            adam_step(agent.critic, g, agent.critic_opt)
            c_loss += loss * len(idx)
            if fit_actor:
                w = None if actor_weight is None else actor_weight[idx]
                loss, g = cross_entropy_loss_and_grad(agent.actor, x[idx], actor_target[idx], weight=w)
                adam_step(agent.actor, g, agent.actor_opt)
                a_loss += loss * len(idx)
        critic_curve.append(c_loss / len(x))
        actor_curve.append(a_loss / len(x))
    return critic_curve, actor_curve


def normalize_advantage(delta, scale: float = 1.0) -> np.ndarray:
    """Rescale advantages to standard deviation ``scale`` (left alone when nearly constant)."""
    delta = np.asarray(delta, dtype=float)
    sd = delta.std()
    return delta * (scale / sd) if sd > 1e-8 else delta


def train_store_batch(agent: ActorCritic, batch: Transitions, gamma: float, epochs: int = 40,
                      batch_rows: int | None = None, rng=None, advantage_scale: float | None = None) -> LossStats:
    """Fit critic to TD(0) targets and actor to the smoothed softmax target.

    Targets are computed once from the networks as they were before the
    update, then fitted for ``epochs`` passes of minibatch Adam over
    ``batch_rows``-row minibatches (the whole batch when ``None``).  With all
    advantages zero the target equals the current policy and the actor is
    left untouched.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    delta, target = _advantages(agent, batch, gamma)
    x = agent._in(batch.obs)
    adv = delta if advantage_scale is None else normalize_advantage(delta, advantage_scale)
    goal = softmax(actor_target_logits(agent.actor.logits(x), batch.action, adv))
    y = (target / agent.value_scale)[:, None]
    weight = None if np.any(delta != 0) else np.zeros(len(batch))
    critic_curve, actor_curve = _fit(agent, x, y, goal, weight, epochs, batch_rows or len(batch), rng)
    return LossStats(critic_curve[-1], actor_curve[-1], critic_curve, float(delta.mean()))


WAREHOUSE_ACTOR_UPDATES = ("bounded", "likelihood")


def train_warehouse_batch(agent: ActorCritic, batch: Transitions, gamma: float, epochs: int = 40,
                          batch_rows: int | None = None, rng=None, actor_update: str = "bounded",
                          advantage_scale: float | None = 1.0) -> LossStats:
    """Advantage actor-critic update for the binary reorder decision.

    ``"likelihood"`` fits the advantage-weighted log-likelihood of the taken
    actions. With advantages held fixed over many epochs that objective has no
    minimum, and the policy saturates on whichever action has the larger
    summed advantage. ``"bounded"`` instead fits the cross-entropy towards
    ``softmax(l + adv * onehot(action))``, the store target without neighbour
    smoothing. Its first step is the likelihood gradient scaled by ``p(action)``
    and it stops once the target is matched.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    if actor_update not in WAREHOUSE_ACTOR_UPDATES:
        raise ValueError(f"unknown warehouse actor update {actor_update!r}")
    delta, target = _advantages(agent, batch, gamma)
    x = agent._in(batch.obs)
    onehot = np.eye(agent.actor.sizes[-1])[batch.action]
    y = (target / agent.value_scale)[:, None]
    rows = batch_rows or len(batch)
    if actor_update == "likelihood":
        critic_curve, actor_curve = _fit(agent, x, y, onehot, delta, epochs, rows, rng)
    else:
        adv = delta if advantage_scale is None else normalize_advantage(delta, advantage_scale)
        goal = softmax(agent.actor.logits(x) + adv[:, None] * onehot)
        weight = None if np.any(delta != 0) else np.zeros(len(batch))
        critic_curve, actor_curve = _fit(agent, x, y, goal, weight, epochs, rows, rng)
    return LossStats(critic_curve[-1], actor_curve[-1], critic_curve, float(delta.mean()))


# --- policies ----------------------------------------------------------------

class RLStorePolicy:
    """Store policy backed by one agent per store.

    ``last_obs``/``last_actions`` keep the most recent decision so a trainer
    can record transitions without recomputing features.
    """

    def __init__(self, agents, mode: str = "argmax", rngs=None, epsilon: float = 0.0, volume_ref=None):
        self.agents = list(agents)
        self.mode = mode
        self.rngs = rngs
        self.epsilon = epsilon
        self.volume_ref = volume_ref if volume_ref is not None else self.agents[0].metadata["volume_ref"]
        self.last_obs = None
        self.last_actions = None

    def act(self, env: InventoryEnv, modes=None) -> np.ndarray:
        obs = store_observations(env, self.volume_ref)
        actions = np.empty(obs.shape[:2], dtype=int)
        for j, agent in enumerate(self.agents):
            mode = self.mode if modes is None else modes[j]
            rng = self.rngs[j] if self.rngs is not None else None
            actions[j] = select_action(agent.policy(obs[j]), mode, rng, self.epsilon)
        self.last_obs, self.last_actions = obs, actions
        return action_to_quantity(actions, obs[..., 0])


class RLWarehousePolicy:
    needs_estimates = True

    def __init__(self, agent: ActorCritic, mode: str = "argmax", rng=None, epsilon: float = 0.0):
        self.agent = agent
        self.mode = mode
        self.rng = rng
        self.epsilon = epsilon
        self.last_obs = None

    def decide(self, env: InventoryEnv, est) -> np.ndarray:
        obs = warehouse_observe(est.chi, est.chi_hat, est.demand_hat, est.waste_hat)
        self.last_obs = obs
        return select_action(self.agent.policy(obs), self.mode, self.rng, self.epsilon)
