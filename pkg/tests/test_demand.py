from dataclasses import replace

import numpy as np
import pytest

from marlinv.demand import (DemandTrace, TraceFormatError, aggregate_store_demand, generate_demand,
                            generate_forecast, load_trace, pearson_by_series, save_trace)
from marlinv.instance import StoreSpec, make_instance


@pytest.fixture(scope="module")
def big():
    spec = make_instance(n_products=50, n_stores=3, periods=900, split=600, seed=3)
    return spec, generate_demand(spec)


def test_calibrated_mean_sales(big):
    spec, d = big
    for j, s in enumerate(spec.stores):
        m = d.w[:, j].mean()
        assert s.norm_sales - 0.002 <= m <= s.norm_sales + 0.002, (j, m, s.norm_sales)


def test_single_store_target():
    spec = make_instance(n_products=50, n_stores=1, periods=900, split=600, seed=1)
    spec = replace(spec, stores=(replace(spec.stores[0], norm_sales=0.021),))
    m = generate_demand(spec).w.mean()
    assert 0.019 <= m <= 0.023


def test_zero_base_rate_gives_zero_trace():
    spec = make_instance(n_products=4, n_stores=2, periods=40, split=20)
    spec = replace(spec, products=tuple(replace(p, base_rate=0.0) for p in spec.products))
    assert generate_demand(spec).w.sum() == 0.0


def test_deterministic(big):
    spec, d = big
    again = generate_demand(spec)
    assert again.w.tobytes() == d.w.tobytes()
    f1, f2 = generate_forecast(d, 0.6, seed=9), generate_forecast(d, 0.6, seed=9)
    assert f1.w_hat.tobytes() == f2.w_hat.tobytes()


def test_nonnegative(big):
    _, d = big
    f = generate_forecast(d, 0.3, seed=1)
    assert (d.w >= 0).all() and (f.w_hat >= 0).all()


def test_perfect_forecast_is_exact(big):
    _, d = big
    assert np.array_equal(generate_forecast(d, 1.0).w_hat, d.w)


@pytest.mark.parametrize("target", [0.0, 0.1, 0.6, 0.95])
def test_forecast_correlation_on_target(big, target):
    _, d = big
    f = generate_forecast(d, target, seed=4)
    assert abs(pearson_by_series(d.w, f.w_hat) - target) <= 0.05


def test_forecast_rejects_bad_target(big):
    with pytest.raises(ValueError):
        generate_forecast(big[1], 1.5)


def test_aggregate_examples():
    f = np.full((4, 1, 1), 0.1)
    assert aggregate_store_demand(f, 0, 4, np.array([0.5]))[0] == pytest.approx(0.2)
    assert aggregate_store_demand(np.zeros((4, 2, 3)), 0, 4, np.array([0.5, 0.5])).tolist() == [0, 0, 0]
    assert aggregate_store_demand(np.ones((4, 1, 1)), 0, 4, np.array([1.0]))[0] == 1.0
    with pytest.raises(ValueError):
        aggregate_store_demand(f, 3, 3, np.array([0.5]))


def test_trace_round_trip(tmp_path, rng):
    w = rng.lognormal(size=(7, 2, 3)) * 1e-3
    path = tmp_path / "t.csv"
    save_trace(w, path, split=5)
    back, split = load_trace(path)
    assert split == 5
    np.testing.assert_allclose(back, w, rtol=0, atol=1e-12)
    assert path.read_text().splitlines()[1] == "t,store,product,value"


def test_empty_trace_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(TraceFormatError, match="empty"):
        load_trace(p)


def test_wrong_column_count_names_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,store,product,value\n0,0,0,0.1\n1,0,0\n")
    with pytest.raises(TraceFormatError, match=r"bad\.csv:3"):
        load_trace(p)


def test_unparseable_value(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,store,product,value\n0,0,0,abc\n")
    with pytest.raises(TraceFormatError, match=":2"):
        load_trace(p)


def test_demand_trace_validation():
    with pytest.raises(ValueError):
        DemandTrace(np.zeros((4, 2)), 1)
    with pytest.raises(ValueError):
        DemandTrace(-np.ones((4, 1, 1)), 1)
