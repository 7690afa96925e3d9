import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from marlinv.instance import InstanceSpec, ProductSpec, StoreSpec  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def small_spec(rng, P=None, S=None, T=None, cycle=None, truck_scale=None) -> InstanceSpec:
    """Random small instance; trucks are sometimes tight so clipping is exercised."""
    P = P or int(rng.integers(1, 6))
    S = S or int(rng.integers(1, 3))
    cycle = cycle or int(rng.integers(1, 5))
    T = T or int(rng.integers(2 * cycle + 1, 41))
    products = tuple(ProductSpec(unit_volume=float(rng.uniform(0.5, 2.0)), shelf_life=int(rng.integers(1, 8)),
                                 fixed_cost=float(rng.uniform(0, 0.3)), variable_cost=float(rng.uniform(0, 0.2)),
                                 base_rate=float(rng.uniform(0.2, 2.0)))
                     for _ in range(P))
    raw = rng.uniform(0.2, 1.0, size=S)
    scales = raw / raw.sum() * rng.uniform(0.5, 1.0)
    ts = truck_scale if truck_scale is not None else rng.uniform(0.1, 2.0)
    stores = tuple(StoreSpec(truck_volume=float(ts * P * rng.uniform(0.5, 1.5)), scale=float(a),
                             shelf_capacity=float(rng.uniform(0.5, 2.0)))
                   for a in scales)
    return InstanceSpec(products, stores, periods=T, split=T // 2, cycle=cycle)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
