"""Synthetic demand and forecast traces, plus their CSV format.

Demand for product ``i`` at store ``j`` in period ``t`` is::

    norm_sales_j * rel_rate_i * day_of_week(t) * time_of_day(t) * noise

where ``noise`` has unit mean: a purchase happens with probability
``1 - intermittency`` and its size is lognormal.  Forecasts mix the realized
demand with independent lognormal noise, with the mixing weight tuned so the
mean per-series Pearson correlation hits a requested target.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .instance import InstanceSpec


class TraceFormatError(ValueError):
    """Malformed trace file."""


@dataclass(frozen=True)
class DemandTrace:
    w: np.ndarray  # (T, S, P)
    split: int

    def __post_init__(self):
        if self.w.ndim != 3:
            raise ValueError("demand trace must be (periods, stores, products)")
        if not 0 <= self.split < self.w.shape[0]:
            raise ValueError(f"split {self.split} outside horizon {self.w.shape[0]}")
        if (self.w < 0).any():
            raise ValueError("demand must be non-negative")

    @property
    def periods(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class ForecastTrace:
    w_hat: np.ndarray  # (T, S, P)
    achieved_r: float
    mix: float = 1.0


def _seasonality(spec: InstanceSpec, periods: int) -> np.ndarray:
    tod = np.asarray(spec.demand.time_of_day, dtype=float)
    dow = np.asarray(spec.demand.day_of_week, dtype=float)
    tod = tod / tod.mean()
    dow = dow / dow.mean()
    t = np.arange(periods)
    per_day = len(tod)
    return tod[t % per_day] * dow[(t // per_day) % 7]


def _unit_noise(rng, size, sigma: float, intermittency: float) -> np.ndarray:
    """Unit-mean nonnegative noise: Bernoulli purchase times lognormal size."""
    size_draw = rng.lognormal(-0.5 * sigma**2, sigma, size=size)
    if intermittency <= 0:
        return size_draw
    buy = rng.random(size) >= intermittency
    return np.where(buy, size_draw / (1.0 - intermittency), 0.0)


def generate_demand(spec: InstanceSpec, seed: int | None = None) -> DemandTrace:
    seed = spec.seed if seed is None else seed
    rng = np.random.default_rng([seed, 1])
    T = spec.periods
    mean = spec.expected_demand()  # (S, P)
    season = _seasonality(spec, T)
    noise = _unit_noise(rng, (T,) + mean.shape, spec.demand.noise_sigma, spec.demand.intermittency)
    w = season[:, None, None] * mean[None] * noise
    return DemandTrace(w=w, split=spec.split)


def pearson_by_series(a: np.ndarray, b: np.ndarray) -> float:
    """Mean over (store, product) series of the time-axis Pearson correlation.

    Constant series are skipped; returns 0 if every series is constant.
    """
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    den = np.sqrt((a * a).sum(axis=0) * (b * b).sum(axis=0))
    ok = den > 0
    if not ok.any():
        return 0.0
    return float(((a * b).sum(axis=0)[ok] / den[ok]).mean())


def generate_forecast(demand: DemandTrace, target_r: float, seed: int = 0, sigma: float = 0.6,
                      tol: float = 0.01) -> ForecastTrace:
    if not 0.0 <= target_r <= 1.0:
        raise ValueError(f"target_r must be in [0, 1], got {target_r}")
    w = demand.w
    if target_r == 1.0:
        return ForecastTrace(w_hat=w.copy(), achieved_r=1.0, mix=1.0)
    rng = np.random.default_rng([seed, 2])
    level = w.mean(axis=0, keepdims=True)
    z = level * rng.lognormal(-0.5 * sigma**2, sigma, size=w.shape)

    def mixed(m):
        return m * w + (1.0 - m) * z

    # correlation is increasing in the mixing weight; bisect on it
    lo, hi = 0.0, 1.0
    m = 0.0 if target_r == 0 else 0.5
    for _ in range(60):
        r = pearson_by_series(w, mixed(m))
        if abs(r - target_r) <= tol or target_r == 0:
            break
        if r < target_r:
            lo = m
        else:
            hi = m
        m = 0.5 * (lo + hi)
    w_hat = np.maximum(mixed(m), 0.0)
    return ForecastTrace(w_hat=w_hat, achieved_r=pearson_by_series(w, w_hat), mix=m)


def aggregate_store_demand(forecast: np.ndarray, t0: int, t1: int, scale: np.ndarray) -> np.ndarray:
    """Store demand over ``[t0, t1)`` converted to warehouse units, clamped to [0, 1]."""
    if not t0 < t1 <= forecast.shape[0]:
        raise ValueError(f"need t0 < t1 <= {forecast.shape[0]}, got {t0}, {t1}")
    total = (scale[None, :, None] * forecast[t0:t1]).sum(axis=(0, 1))
    return np.clip(total, 0.0, 1.0)


# --- CSV -----------------------------------------------------------------------

HEADER = ["t", "store", "product", "value"]


def save_trace(values: np.ndarray, path, split: int | None = None) -> None:
    """Write a (T, S, P) array as long-format CSV; ``repr`` floats round-trip exactly."""
    values = np.asarray(values)
    T, S, P = values.shape
    with open(path, "w", newline="") as fh:
        if split is not None:
            fh.write(f"# split={split}\n")
        fh.write(",".join(HEADER) + "\n")
        for t in range(T):
            for j in range(S):
                row = values[t, j]
                fh.write("".join(f"{t},{j},{i},{float(row[i])!r}\n" for i in range(P)))


def load_trace(path) -> tuple[np.ndarray, int | None]:
    """Read a trace written by :func:`save_trace`; returns ``(values, split)``."""
    split = None
    rows = []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body_start = 0
    for n, line in enumerate(lines):
        if line.startswith("#"):
            if line.startswith("# split="):
                split = int(line.split("=", 1)[1])
            continue
        body_start = n
        break
    else:
        raise TraceFormatError(f"{path}: empty trace file")
    header = lines[body_start].split(",")
    if header != HEADER:
        raise TraceFormatError(f"{path}:{body_start + 1}: expected header {','.join(HEADER)}")
    for n, rec in enumerate(csv.reader(lines[body_start + 1:]), start=body_start + 2):
        if len(rec) != 4:
            raise TraceFormatError(f"{path}:{n}: expected 4 columns, got {len(rec)}")
        try:
            rows.append((int(rec[0]), int(rec[1]), int(rec[2]), float(rec[3])))
        except ValueError:
            raise TraceFormatError(f"{path}:{n}: cannot parse {rec}") from None
    if not rows:
        raise TraceFormatError(f"{path}: trace has no rows")
    idx = np.array([r[:3] for r in rows])
    shape = tuple(idx.max(axis=0) + 1)
    if len(rows) != shape[0] * shape[1] * shape[2]:
        raise TraceFormatError(f"{path}: expected {np.prod(shape)} rows for shape {shape}, got {len(rows)}")
    values = np.full(shape, np.nan)
    values[idx[:, 0], idx[:, 1], idx[:, 2]] = [r[3] for r in rows]
    if np.isnan(values).any():
        raise TraceFormatError(f"{path}: duplicate or missing (t, store, product) rows")
    return values, split
