"""Two-echelon inventory dynamics: one warehouse, S stores, P perishable products.

All quantities are normalized: a store inventory of 1 means a full shelf for
that product, a warehouse inventory of 1 means full warehouse space.  Stock is
held in age buckets (index 0 = freshest) so that spoilage can be tracked;
sales and shipments always drain the oldest stock first.

Period ``t`` runs in this order:

1. at warehouse decision periods (``t % cycle == 0``) the vendor order
   ``mu = 1 - chi`` is placed for every product with ``b = 1``;
2. store requests are clipped to truck volume (ratio ``rho``);
3. the warehouse fulfils what it can, rationing proportionally (coupled mode);
4. deliveries enter the stores (overflow above a full shelf is discarded);
5. demand ``w[t]`` is served;
6. store stock ages by one period and expired stock is wasted;
7. if ``t + 1`` starts a new warehouse cycle, warehouse stock ages by
   ``cycle`` periods and the pending vendor order is delivered.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .instance import InstanceSpec

EMPTY_TOL = 1e-12


class DimensionError(ValueError):
    """Array shapes do not match the instance."""


class SchedulingError(RuntimeError):
    """A warehouse order was placed outside a decision period."""


# --- bucket primitives -------------------------------------------------------

def add_fresh(buckets: np.ndarray, qty: np.ndarray) -> np.ndarray:
    """Put ``qty`` into the freshest bucket without exceeding a total of 1.

    Mutates ``buckets`` and returns the discarded overflow.
    """
    room = np.maximum(0.0, 1.0 - buckets.sum(axis=-1))
    accepted = np.minimum(qty, room)
    buckets[..., 0] += accepted
    return qty - accepted


def fifo_drain(buckets: np.ndarray, amount: np.ndarray) -> np.ndarray:
    """Remove up to ``amount`` from the oldest buckets first.

    Mutates ``buckets`` and returns the quantity actually removed.
    """
    rev = buckets[..., ::-1]
    cum = np.cumsum(rev, axis=-1)
    total = cum[..., -1]
    amount = np.asarray(amount, dtype=float)
    left = np.maximum(0.0, cum - amount[..., None])
    # bucket k keeps whatever of it lies above the drained prefix
    kept = np.minimum(rev, left)
    buckets[...] = kept[..., ::-1]
    return np.minimum(total, amount)


def expiry_mask(shelf_life: np.ndarray, n_buckets: int, steps: int) -> np.ndarray:
    """True where stock of that age expires after aging by ``steps``."""
    ages = np.arange(n_buckets)
    return ages[None, :] + steps >= shelf_life[:, None]


def age_buckets(buckets: np.ndarray, shelf_life: np.ndarray, steps: int = 1) -> np.ndarray:
    """Age stock by ``steps`` periods; mutates ``buckets`` and returns waste."""
    expire = expiry_mask(shelf_life, buckets.shape[-1], steps)
    waste = np.where(expire, buckets, 0.0).sum(axis=-1)
    survivors = np.where(expire, 0.0, buckets)
    buckets[...] = 0.0
    if steps < buckets.shape[-1]:
        buckets[..., steps:] = survivors[..., : buckets.shape[-1] - steps]
    return waste


def expiring_quantity(buckets: np.ndarray, shelf_life: np.ndarray, steps: int = 1) -> np.ndarray:
    expire = expiry_mask(shelf_life, buckets.shape[-1], steps)
    return np.where(expire, buckets, 0.0).sum(axis=-1)


# --- state -------------------------------------------------------------------

@dataclass
class SimState:
    store: np.ndarray  # (S, P, L) age buckets
    warehouse: np.ndarray  # (P, L) age buckets
    pending: np.ndarray  # (P,) vendor order in flight
    t: int = 0

    @property
    def store_inventory(self) -> np.ndarray:
        return self.store.sum(axis=-1)

    @property
    def warehouse_inventory(self) -> np.ndarray:
        return self.warehouse.sum(axis=-1)

    def copy(self) -> "SimState":
        return SimState(self.store.copy(), self.warehouse.copy(), self.pending.copy(), self.t)

    def fingerprint(self) -> bytes:
        return self.store.tobytes() + self.warehouse.tobytes() + self.pending.tobytes() + str(self.t).encode()


def initial_state(spec: InstanceSpec, t: int = 0, store_level=None, warehouse_level=None) -> SimState:
    S, P = spec.n_stores, spec.n_products
    L = int(spec.shelf_life.max())
    store = np.zeros((S, P, L))
    warehouse = np.zeros((P, L))
    store[..., 0] = spec.initial_store_inventory if store_level is None else store_level
    warehouse[..., 0] = spec.initial_warehouse_inventory if warehouse_level is None else warehouse_level
    return SimState(store, warehouse, np.zeros(P), t)


@dataclass
class StepOutcome:
    t: int
    requested: np.ndarray  # (S, P) truck-clipped requests
    supplied: np.ndarray  # (S, P) delivered to stores
    rho: np.ndarray  # (S,)
    demand: np.ndarray  # (S, P)
    sold: np.ndarray
    lost_sales: np.ndarray
    store_waste: np.ndarray
    overflow: np.ndarray
    inventory_start: np.ndarray
    inventory_end: np.ndarray
    refused: np.ndarray  # (P,) Omega, warehouse units
    warehouse_waste: np.ndarray = None  # (P,) set when a warehouse cycle closes
    order: np.ndarray = None  # (P,) b, set at decision periods
    order_qty: np.ndarray = None  # (P,) mu
    warehouse_inventory: np.ndarray = None  # (P,) after this period


# --- store-level operations --------------------------------------------------

def clip_to_truck(u: np.ndarray, volume: np.ndarray, truck_volume) -> tuple[np.ndarray, np.ndarray]:
    """Scale requests down so their total volume fits the truck.

    Works on one store (``u`` of shape (P,)) or all stores at once ((S, P)
    with ``truck_volume`` of shape (S,)).  Returns ``(clipped, rho)`` with
    ``rho = max(volume @ u / truck_volume, 1)``.
    """
    u = np.asarray(u, dtype=float)
    volume = np.asarray(volume, dtype=float)
    if u.shape != volume.shape:
        raise DimensionError(f"requests {u.shape} vs volumes {volume.shape}")
    rho = np.maximum((volume * u).sum(axis=-1) / truck_volume, 1.0)
    return u / np.expand_dims(rho, -1), rho


def apply_store_replenishment(state: SimState, j: int, u_j: np.ndarray) -> np.ndarray:
    """Add deliveries to store ``j``; returns the overflow discarded at a full shelf."""
    if np.shape(u_j) != state.store.shape[1:2]:
        raise DimensionError(f"expected {state.store.shape[1]} quantities, got {np.shape(u_j)}")
    return add_fresh(state.store[j], np.asarray(u_j, dtype=float))


def apply_sales(state: SimState, j: int, w_j: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Serve demand at store ``j``; returns ``(sold, lost_sales)``."""
    w_j = np.asarray(w_j, dtype=float)
    sold = fifo_drain(state.store[j], w_j)
    return sold, np.maximum(0.0, w_j - sold)


def age_stores(state: SimState, shelf_life: np.ndarray) -> np.ndarray:
    """Age every store by one period; returns waste of shape (S, P)."""
    return age_buckets(state.store, shelf_life, 1)


def age_warehouse(state: SimState, shelf_life: np.ndarray, steps: int) -> np.ndarray:
    return age_buckets(state.warehouse, shelf_life, steps)


def predicted_wastage(buckets: np.ndarray, shelf_life: np.ndarray, forecast, steps: int = 1) -> np.ndarray:
    """Stock expected to spoil in the next ``steps`` periods after forecast sales."""
    return np.maximum(0.0, expiring_quantity(buckets, shelf_life, steps) - forecast)


def warehouse_fulfill(state: SimState, requests: np.ndarray, scale: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ship truck-clipped ``requests`` (S, P) from the warehouse.

    Shortages are rationed by scaling every store's request for that product
    by the same factor.  Returns ``(supplied, refused)`` where ``refused`` is
    in warehouse units, and drains the warehouse FIFO.
    """
    requests = np.asarray(requests, dtype=float)
    if requests.shape != state.store.shape[:2]:
        raise DimensionError(f"requests {requests.shape} vs stores {state.store.shape[:2]}")
    need = (scale[:, None] * requests).sum(axis=0)
    chi = state.warehouse.sum(axis=-1)
    short = need > chi
    factor = np.ones_like(need)
    np.divide(np.maximum(chi, 0.0), need, out=factor, where=short)
    supplied = requests * factor[None, :]
    shipped = np.where(short, np.maximum(chi, 0.0), need)
    fifo_drain(state.warehouse, shipped)
    refused = (scale[:, None] * (requests - supplied)).sum(axis=0)
    return supplied, np.maximum(refused, 0.0)


def apply_warehouse_order(state: SimState, b: np.ndarray, cycle: int) -> np.ndarray:
    """Queue a vendor order filling each chosen product's free warehouse space."""
    if state.t % cycle != 0:
        raise SchedulingError(f"warehouse orders are placed every {cycle} periods; t={state.t}")
    b = np.asarray(b)
    if b.shape != state.pending.shape:
        raise DimensionError(f"expected {state.pending.shape[0]} decisions, got {b.shape}")
    mu = np.where(b.astype(bool), np.maximum(0.0, 1.0 - state.warehouse.sum(axis=-1)), 0.0)
    state.pending = mu
    return mu


def deliver_warehouse_order(state: SimState) -> np.ndarray:
    """Move the pending order into stock; returns any clamped excess."""
    excess = add_fresh(state.warehouse, state.pending)
    state.pending = np.zeros_like(state.pending)
    return excess


# --- environment -------------------------------------------------------------

@dataclass
class InventoryEnv:
    """Steppable environment over one slice ``[start, stop)`` of a demand trace.

    ``coupled=False`` gives every store an unlimited warehouse, which is how
    store agents are trained.  ``sales`` is the demand actually served; the
    rollout estimator swaps it for the forecast on a clone.
    """

    spec: InstanceSpec
    sales: np.ndarray  # (T, S, P)
    forecast: np.ndarray  # (T, S, P)
    coupled: bool = True
    start: int = 0
    stop: int = None
    state: SimState = field(default=None)

    def __post_init__(self):
        if self.stop is None:
            self.stop = self.sales.shape[0]
        expected = (self.spec.n_stores, self.spec.n_products)
        if self.sales.shape[1:] != expected or self.forecast.shape != self.sales.shape:
            raise DimensionError(f"trace shape {self.sales.shape} does not match instance {expected}")
        self.volume = self.spec.store_volume
        self.truck_volume = self.spec.truck_volume
        self.scale = self.spec.scale
        self.shelf_life = self.spec.shelf_life
        self.cycle = self.spec.cycle
        if self.state is None:
            self.reset()

    def reset(self, store_level=None, warehouse_level=None) -> SimState:
        self.state = initial_state(self.spec, self.start, store_level, warehouse_level)
        return self.state

    @property
    def t(self) -> int:
        return self.state.t

    @property
    def done(self) -> bool:
        return self.state.t >= self.stop

    def decision_due(self) -> bool:
        return self.coupled and self.state.t % self.cycle == 0

    def clone(self) -> "InventoryEnv":
        return InventoryEnv(self.spec, self.sales, self.forecast, self.coupled,
                            self.start, self.stop, self.state.copy())

    def step(self, requests: np.ndarray, b: np.ndarray = None) -> StepOutcome:
        st = self.state
        t = st.t
        if t >= self.stop:
            raise IndexError(f"episode finished at t={self.stop}")
        order = order_qty = None
        if self.decision_due():
            if b is None:
                raise SchedulingError(f"warehouse decision required at t={t}")
            order = np.asarray(b).astype(int)
            order_qty = apply_warehouse_order(st, order, self.cycle)

        x0 = st.store.sum(axis=-1)
        requested, rho = clip_to_truck(np.clip(requests, 0.0, 1.0), self.volume, self.truck_volume)
        if self.coupled:
            supplied, refused = warehouse_fulfill(st, requested, self.scale)
        else:
            supplied, refused = requested, np.zeros(self.spec.n_products)
        overflow = add_fresh(st.store, supplied)
        w = self.sales[t]
        sold = fifo_drain(st.store, w)
        store_waste = age_buckets(st.store, self.shelf_life, 1)
        st.t = t + 1

        wh_waste = None
        if self.coupled and st.t % self.cycle == 0:
            wh_waste = age_buckets(st.warehouse, self.shelf_life, self.cycle)
            deliver_warehouse_order(st)
        return StepOutcome(
            t=t, requested=requested, supplied=supplied, rho=rho, demand=w, sold=sold,
            lost_sales=np.maximum(0.0, w - sold), store_waste=store_waste, overflow=overflow,
            inventory_start=x0, inventory_end=st.store.sum(axis=-1), refused=refused,
            warehouse_waste=wh_waste, order=order, order_qty=order_qty,
            warehouse_inventory=st.warehouse.sum(axis=-1) if self.coupled else None,
        )
