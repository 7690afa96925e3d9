"""Run configuration and the end-to-end pipeline shared by the CLI and scripts.

A run config is one JSON object::

    {"seed": 0,
     "instance": {"n_products": 20, "truck_factor": 1.4, ...},
     "stores": {...TrainConfig fields...},
     "warehouse": {...TrainConfig fields...},
     "weights": {...RewardWeights fields...}}

Every section is optional; omitted fields take the dataclass defaults.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

from .demand import DemandTrace, ForecastTrace, generate_demand, generate_forecast
from .instance import FORECAST_PRESETS, ConfigError, InstanceSpec, make_instance, validate
from .rewards import RewardWeights
from .trainer import TrainConfig, train_stores, train_warehouse


@dataclass(frozen=True)
class InstanceConfig:
    n_products: int = 20
    n_stores: int = 3
    periods: int = 400
    split: int = 300
    forecast: str = "medium"
    truck_factor: float = 1.4
    cycle: int = 4

    @property
    def forecast_r(self) -> float:
        return FORECAST_PRESETS[self.forecast]


# Store training defaults; see the README for the reasoning behind each.
STORE_TRAINING = TrainConfig(max_episodes=120, advantage_scale=4.0)
WAREHOUSE_TRAINING = TrainConfig(max_episodes=60, advantage_scale=1.0)
DEFAULT_WEIGHTS = RewardWeights(gamma=0.5)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    instance: InstanceConfig = field(default_factory=InstanceConfig)
    stores: TrainConfig = STORE_TRAINING
    warehouse: TrainConfig = WAREHOUSE_TRAINING
    weights: RewardWeights = DEFAULT_WEIGHTS

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        validate(d, RUN_SCHEMA)
        base = cls()
        seed = d.get("seed", base.seed)

        def merge(obj, section):
            try:
                return replace(obj, **d.get(section, {}))
            except (TypeError, ValueError) as e:
                raise ConfigError(f"invalid config at {section}: {e}") from None

        stores = merge(base.stores, "stores")
        warehouse = merge(base.warehouse, "warehouse")
        # per-run seed unless a section pins its own
        if "seed" not in d.get("stores", {}):
            stores = replace(stores, seed=seed)
        if "seed" not in d.get("warehouse", {}):
            warehouse = replace(warehouse, seed=seed)
        return cls(seed, merge(base.instance, "instance"), stores, warehouse, merge(base.weights, "weights"))


_JSON_TYPES = {"int": "integer", "float": "number", "str": "string", "bool": "boolean", "None": "null"}


def _props(cls, overrides=None) -> dict:
    """Schema properties from a dataclass's (string) annotations."""
    out = {}
    for f in fields(cls):
        names = [_JSON_TYPES[t.strip()] for t in str(f.type).split("|")]
        out[f.name] = {"type": names[0] if len(names) == 1 else names}
    out.update(overrides or {})
    return out


RUN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer"},
        "instance": {
            "type": "object",
            "additionalProperties": False,
            "properties": _props(InstanceConfig, {
                "n_products": {"type": "integer", "minimum": 2},
                "n_stores": {"type": "integer", "minimum": 1},
                "periods": {"type": "integer", "minimum": 2},
                "split": {"type": "integer", "minimum": 1},
                "forecast": {"enum": sorted(FORECAST_PRESETS)},
                "truck_factor": {"type": "number", "exclusiveMinimum": 0},
                "cycle": {"type": "integer", "minimum": 1},
            }),
        },
        "stores": {"type": "object", "additionalProperties": False,
                   "properties": _props(TrainConfig)},
        "warehouse": {"type": "object", "additionalProperties": False, "properties": _props(TrainConfig)},
        "weights": {"type": "object", "additionalProperties": False, "properties": _props(RewardWeights)},
    },
}


def build_instance(cfg: RunConfig) -> tuple[InstanceSpec, DemandTrace, ForecastTrace]:
    ic = cfg.instance
    if not 0 < ic.split < ic.periods:
        raise ConfigError(f"invalid config at instance/split: must lie in (0, {ic.periods})")
    spec = make_instance(ic.n_products, ic.n_stores, ic.periods, ic.split, ic.forecast_r, ic.truck_factor,
                         cfg.seed, ic.cycle)
    demand = generate_demand(spec)
    forecast = generate_forecast(demand, ic.forecast_r, cfg.seed)
    return spec, demand, forecast


def train_system(cfg: RunConfig, spec=None, demand=None, forecast=None, warehouse: bool = True):
    """Train stores, then (optionally) the warehouse.  Returns ``(store_agents, wh_agent, logs)``."""
    if spec is None:
        spec, demand, forecast = build_instance(cfg)
    agents, store_log = train_stores(spec, demand, forecast, cfg.stores, cfg.weights)
    logs = {"stores": store_log}
    wh = None
    if warehouse:
        wh, logs["warehouse"] = train_warehouse(spec, demand, forecast, agents, cfg.warehouse, cfg.weights)
    return agents, wh, logs
