"""Problem instances: products, stores, warehouse, horizon and generator knobs.

An :class:`InstanceSpec` fully determines a simulation instance together with
its synthetic demand.  Instances round-trip through JSON (see
``INSTANCE_SCHEMA``) and are identified in reports by :func:`spec_hash`.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import jsonschema
import numpy as np

SCHEMA_VERSION = 1

# Store presets: normalized sales per period and
# relative shelf capacity of each store.
STORE_PRESETS = (
    {"norm_sales": 0.017, "rel_capacity": 1.0},
    {"norm_sales": 0.033, "rel_capacity": 2.0},
    {"norm_sales": 0.033, "rel_capacity": 1.5},
)

FORECAST_PRESETS = {"low": 0.1, "medium": 0.6, "high": 0.95}


class ConfigError(ValueError):
    """Invalid instance or run configuration."""


@dataclass(frozen=True)
class ProductSpec:
    unit_volume: float
    shelf_life: int
    fixed_cost: float = 0.2
    variable_cost: float = 0.1
    base_rate: float = 1.0

    def __post_init__(self):
        if not self.unit_volume > 0:
            raise ConfigError(f"unit_volume must be > 0, got {self.unit_volume}")
        if int(self.shelf_life) != self.shelf_life or self.shelf_life < 1:
            raise ConfigError(f"shelf_life must be an integer >= 1, got {self.shelf_life}")
        if self.fixed_cost < 0 or self.variable_cost < 0:
            raise ConfigError("vendor costs must be non-negative")
        if self.base_rate < 0:
            raise ConfigError("base_rate must be non-negative")


@dataclass(frozen=True)
class StoreSpec:
    truck_volume: float
    scale: float
    shelf_capacity: float = 1.0
    norm_sales: float = 0.02

    def __post_init__(self):
        if not (self.shelf_capacity > 0 and self.truck_volume > 0 and self.scale > 0):
            raise ConfigError("shelf_capacity, truck_volume and scale must all be > 0")
        if self.norm_sales < 0:
            raise ConfigError("norm_sales must be non-negative")


@dataclass(frozen=True)
class DemandConfig:
    """Knobs of the synthetic demand/forecast generator."""

    noise_sigma: float = 0.6
    intermittency: float = 0.5
    forecast_r: float = 0.6
    forecast_sigma: float = 0.6
    day_of_week: tuple = (0.9, 0.85, 0.9, 1.0, 1.1, 1.3, 0.95)
    time_of_day: tuple = (0.3, 1.2, 1.6, 0.9)


@dataclass(frozen=True)
class InstanceSpec:
    products: tuple
    stores: tuple
    periods: int = 400
    split: int = 300
    cycle: int = 4
    initial_store_inventory: float = 0.5
    initial_warehouse_inventory: float = 0.5
    demand: DemandConfig = field(default_factory=DemandConfig)
    seed: int = 0

    def __post_init__(self):
        if not self.products or not self.stores:
            raise ConfigError("instance needs at least one product and one store")
        if self.cycle < 1:
            raise ConfigError("cycle must be >= 1")
        if not 0 < self.split < self.periods:
            raise ConfigError(f"split must satisfy 0 < split < periods, got {self.split}")
        if self.periods < 2 * self.cycle:
            raise ConfigError("periods must cover at least two warehouse cycles")
        if sum(s.scale for s in self.stores) > 1 + 1e-12:
            raise ConfigError("sum of store scales must be <= 1")

    @property
    def n_products(self) -> int:
        return len(self.products)

    @property
    def n_stores(self) -> int:
        return len(self.stores)

    # vectorized views used by the simulator
    @property
    def unit_volume(self) -> np.ndarray:
        return np.array([p.unit_volume for p in self.products], dtype=float)

    @property
    def shelf_life(self) -> np.ndarray:
        return np.array([p.shelf_life for p in self.products], dtype=int)

    @property
    def fixed_cost(self) -> np.ndarray:
        return np.array([p.fixed_cost for p in self.products], dtype=float)

    @property
    def variable_cost(self) -> np.ndarray:
        return np.array([p.variable_cost for p in self.products], dtype=float)

    @property
    def truck_volume(self) -> np.ndarray:
        return np.array([s.truck_volume for s in self.stores], dtype=float)

    @property
    def scale(self) -> np.ndarray:
        return np.array([s.scale for s in self.stores], dtype=float)

    @property
    def store_volume(self) -> np.ndarray:
        """Truck volume taken by one normalized unit, shape (S, P)."""
        cap = np.array([s.shelf_capacity for s in self.stores], dtype=float)
        return cap[:, None] * self.unit_volume[None, :]

    def expected_demand(self) -> np.ndarray:
        """Mean normalized demand per period, shape (S, P)."""
        base = np.array([p.base_rate for p in self.products], dtype=float)
        mean = base.mean()
        rel = base / mean if mean > 0 else base
        target = np.array([s.norm_sales for s in self.stores], dtype=float)
        return target[:, None] * rel[None, :]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        d["demand"]["day_of_week"] = list(self.demand.day_of_week)
        d["demand"]["time_of_day"] = list(self.demand.time_of_day)
        d["products"] = [asdict(p) for p in self.products]
        d["stores"] = [asdict(s) for s in self.stores]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "InstanceSpec":
        validate(d, INSTANCE_SCHEMA)
        d = dict(d)
        d.pop("schema_version", None)
        demand = dict(d.pop("demand", {}))
        for key in ("day_of_week", "time_of_day"):
            if key in demand:
                demand[key] = tuple(demand[key])
        return cls(
            products=tuple(ProductSpec(**p) for p in d.pop("products")),
            stores=tuple(StoreSpec(**s) for s in d.pop("stores")),
            demand=DemandConfig(**demand),
            **d,
        )


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}

INSTANCE_SCHEMA = {
    "type": "object",
    "required": ["products", "stores"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "products": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["unit_volume", "shelf_life"],
                "additionalProperties": False,
                "properties": {
                    "unit_volume": _pos,
                    "shelf_life": {"type": "integer", "minimum": 1},
                    "fixed_cost": _nonneg,
                    "variable_cost": _nonneg,
                    "base_rate": _nonneg,
                },
            },
        },
        "stores": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["truck_volume", "scale"],
                "additionalProperties": False,
                "properties": {
                    "truck_volume": _pos,
                    "scale": _pos,
                    "shelf_capacity": _pos,
                    "norm_sales": _nonneg,
                },
            },
        },
        "periods": {"type": "integer", "minimum": 2},
        "split": {"type": "integer", "minimum": 1},
        "cycle": {"type": "integer", "minimum": 1},
        "initial_store_inventory": {"type": "number", "minimum": 0, "maximum": 1},
        "initial_warehouse_inventory": {"type": "number", "minimum": 0, "maximum": 1},
        "seed": {"type": "integer"},
        "demand": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "noise_sigma": _nonneg,
                "intermittency": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "forecast_r": {"type": "number", "minimum": 0, "maximum": 1},
                "forecast_sigma": _nonneg,
                "day_of_week": {"type": "array", "items": _nonneg, "minItems": 7, "maxItems": 7},
                "time_of_day": {"type": "array", "items": _nonneg, "minItems": 1},
            },
        },
    },
}


def validate(obj, schema) -> None:
    """Validate against a JSON schema, naming the failing field path."""
    try:
        jsonschema.validate(obj, schema)
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {path}: {e.message}") from None


def spec_hash(spec: InstanceSpec) -> str:
    blob = json.dumps(spec.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save_instance(spec: InstanceSpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")


def load_instance(path) -> InstanceSpec:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None
    return InstanceSpec.from_dict(d)


def truck_volumes_for(stores_volume: np.ndarray, expected: np.ndarray, factor: float) -> np.ndarray:
    """Truck volume per store as ``factor`` times the mean per-period shipped volume."""
    return factor * (stores_volume * expected).sum(axis=1)


def make_instance(
    n_products: int = 20,
    n_stores: int = 3,
    periods: int = 400,
    split: int = 300,
    forecast_r: float = 0.6,
    truck_factor: float = 1.6,
    seed: int = 0,
    cycle: int = 4,
    demand: DemandConfig | None = None,
) -> InstanceSpec:
    """Build a synthetic instance with three store size presets.

    Product attributes are drawn from ``seed``; store ``i`` reuses preset
    ``i % 3``.  Store scales are the relative capacities normalized to sum
    to one, so a full warehouse can restock every store once.
    """
    rng = np.random.default_rng([seed, 7919])
    products = tuple(
        ProductSpec(
            unit_volume=float(rng.lognormal(np.log(1e4), 0.5)),
            shelf_life=int(rng.integers(12, 41)),
            fixed_cost=float(rng.uniform(0.15, 0.35)),
            variable_cost=float(rng.uniform(0.05, 0.15)),
            base_rate=float(rng.lognormal(0.0, 0.8)),
        )
        for _ in range(n_products)
    )
    presets = [STORE_PRESETS[j % len(STORE_PRESETS)] for j in range(n_stores)]
    rel = np.array([p["rel_capacity"] for p in presets])
    scales = rel / rel.sum()
    draft = InstanceSpec(
        products=products,
        stores=tuple(
            StoreSpec(truck_volume=1.0, scale=float(a), shelf_capacity=float(p["rel_capacity"]),
                      norm_sales=p["norm_sales"])
            for a, p in zip(scales, presets)
        ),
        periods=periods,
        split=split,
        cycle=cycle,
        demand=replace(demand or DemandConfig(), forecast_r=forecast_r),
        seed=seed,
    )
    vmax = truck_volumes_for(draft.store_volume, draft.expected_demand(), truck_factor)
    return with_truck_volumes(draft, vmax)


def with_truck_volumes(spec: InstanceSpec, volumes) -> InstanceSpec:
    stores = tuple(replace(s, truck_volume=float(v)) for s, v in zip(spec.stores, volumes))
    return replace(spec, stores=stores)
