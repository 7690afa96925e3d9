import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from marlinv.nn import (AdamState, Bundle, CheckpointError, Mlp, adam_step, backward_cross_entropy, backward_mse,
                        checksum, cross_entropy_loss_and_grad, load_checkpoint, mse_loss_and_grad, save_checkpoint,
                        softmax)


def numeric_grad(loss, net, h=1e-5):
    grads = []
    for p in net.params():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss()
            p[idx] = old - h
            down = loss()
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def assert_grads_close(analytic, numeric):
    for a, n in zip(analytic, numeric):
        err = np.abs(a - n)
        assert (err <= 1e-4 * np.maximum(np.abs(a), np.abs(n)) + 1e-6).all(), err.max()


def random_net(rng, output):
    sizes = [int(rng.integers(2, 6))] + [int(rng.integers(2, 8)) for _ in range(rng.integers(1, 3))]
    sizes.append(int(rng.integers(2, 6)) if output == "softmax" else 1)
    net = Mlp(sizes, output, rng=rng)
    for b in net.biases:
        b += rng.normal(scale=0.1, size=b.shape)
    return net


@pytest.mark.parametrize("seed", range(12))
def test_mse_gradient(seed):
    rng = np.random.default_rng(seed)
    net = random_net(rng, "linear")
    x = rng.normal(size=(4, net.sizes[0]))
    y = rng.normal(size=4)
    assert_grads_close(backward_mse(net, x, y), numeric_grad(lambda: mse_loss_and_grad(net, x, y)[0], net))


@pytest.mark.parametrize("seed", range(12))
def test_cross_entropy_gradient(seed):
    rng = np.random.default_rng(100 + seed)
    net = random_net(rng, "softmax")
    x = rng.normal(size=(3, net.sizes[0]))
    target = softmax(rng.normal(size=(3, net.sizes[-1])))
    weight = rng.normal(size=3)
    loss = lambda: cross_entropy_loss_and_grad(net, x, target, weight)[0]  # noqa: E731
    assert_grads_close(backward_cross_entropy(net, x, target, weight), numeric_grad(loss, net))


def test_gradient_of_store_sized_critic():
    rng = np.random.default_rng(7)
    net = Mlp([5, 32, 1], "linear", rng=rng)
    x = rng.normal(size=(2, 5))
    y = rng.normal(size=2)
    assert_grads_close(backward_mse(net, x, y), numeric_grad(lambda: mse_loss_and_grad(net, x, y)[0], net))


def test_forward_examples():
    zero = Mlp([3, 4, 1], "linear", weights=[np.zeros((3, 4)), np.zeros((4, 1))], biases=[np.zeros(4), np.zeros(1)])
    assert zero.predict(np.ones(3))[0] == 0.0
    uni = Mlp([3, 14], "softmax", weights=[np.zeros((3, 14))], biases=[np.zeros(14)])
    np.testing.assert_allclose(uni.predict(np.ones(3)), np.full(14, 1 / 14))
    relu = Mlp([1, 1, 1], "linear", weights=[np.eye(1), np.eye(1)], biases=[np.zeros(1), np.zeros(1)])
    assert relu.predict(np.array([-3.0]))[0] == 0.0


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        Mlp([3, 2], rng=np.random.default_rng(0)).predict(np.ones(4))


@given(st.lists(st.floats(-500, 500), min_size=2, max_size=20))
def test_softmax_stable(z):
    p = softmax(np.array(z))
    assert np.isfinite(p).all() and abs(p.sum() - 1) <= 1e-9


def test_mse_zero_at_target():
    net = Mlp([2, 3, 1], rng=np.random.default_rng(1))
    x = np.array([[0.3, -0.2]])
    g = backward_mse(net, x, net.predict(x))
    assert all(np.all(a == 0) for a in g)


def test_mse_linear_closed_form():
    net = Mlp([3, 1], weights=[np.array([[0.1], [0.2], [0.3]])], biases=[np.array([0.5])])
    x = np.array([1.0, 2.0, -1.0])
    out = net.predict(x)[0]
    g = backward_mse(net, x, 2.0)
    np.testing.assert_allclose(g[0][:, 0], (out - 2.0) * x)
    assert g[1][0] == pytest.approx(out - 2.0)


def test_cross_entropy_output_grad_closed_form():
    net = Mlp([2, 14], "softmax", weights=[np.zeros((2, 14))], biases=[np.zeros(14)])
    x = np.array([[1.0, 0.0]])
    onehot = np.eye(14)[[4]]
    g = backward_cross_entropy(net, x, onehot)
    np.testing.assert_allclose(g[1], np.full(14, 1 / 14) - onehot[0])
    same = backward_cross_entropy(net, x, net.predict(x))
    assert np.allclose(same[1], 0)


def test_cross_entropy_rejects_unnormalized():
    net = Mlp([2, 3], "softmax", rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        backward_cross_entropy(net, np.ones((1, 2)), np.array([[0.5, 0.5, 0.5]]))


def test_adam_zero_gradient_keeps_weights():
    net = Mlp([2, 3, 1], rng=np.random.default_rng(0))
    before = [p.copy() for p in net.params()]
    st_ = AdamState.for_net(net)
    adam_step(net, [np.zeros_like(p) for p in net.params()], st_)
    assert all(np.array_equal(a, b) for a, b in zip(before, net.params()))


def test_adam_first_step_moves_by_rate():
    net = Mlp([2, 1], weights=[np.zeros((2, 1))], biases=[np.zeros(1)])
    st_ = AdamState.for_net(net, lr=0.01)
    adam_step(net, [np.full((2, 1), 3.0), np.full(1, -0.5)], st_)
    # bias-corrected moments at step 1 are g and g**2, so each step is lr * sign(g)
    np.testing.assert_allclose(net.weights[0], -0.01, rtol=1e-6)
    np.testing.assert_allclose(net.biases[0], 0.01, rtol=1e-6)


def test_adam_shape_mismatch():
    net = Mlp([2, 1], rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        adam_step(net, [np.zeros((3, 1)), np.zeros(1)], AdamState.for_net(net))


def test_training_is_deterministic():
    def run():
        rng = np.random.default_rng(3)
        net = Mlp([3, 5, 1], rng=rng)
        st_ = AdamState.for_net(net)
        x, y = rng.normal(size=(8, 3)), rng.normal(size=8)
        for _ in range(10):
            adam_step(net, backward_mse(net, x, y), st_)
        return checksum([net])
    assert run() == run()


def test_checkpoint_round_trip(tmp_path, rng):
    net = Mlp([5, 8, 14], "softmax", rng=rng)
    opt = AdamState.for_net(net)
    adam_step(net, backward_cross_entropy(net, rng.normal(size=(2, 5)), np.eye(14)[[0, 3]]), opt)
    save_checkpoint(Bundle({"actor": net}, {"actor": opt}, {"store": 1}), tmp_path / "c.json")
    back = load_checkpoint(tmp_path / "c.json")
    x = rng.normal(size=(6, 5))
    assert np.array_equal(back.nets["actor"].predict(x), net.predict(x))
    assert back.optimizers["actor"].step == 1 and back.metadata == {"store": 1}
    assert all(np.array_equal(a, b) for a, b in zip(back.optimizers["actor"].v, opt.v))


def test_checkpoint_version_mismatch(tmp_path, rng):
    p = tmp_path / "c.json"
    save_checkpoint(Bundle({"n": Mlp([2, 1], rng=rng)}), p)
    doc = json.loads(p.read_text())
    doc["version"] = 99
    p.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(p)


def test_checkpoint_truncated(tmp_path, rng):
    p = tmp_path / "c.json"
    save_checkpoint(Bundle({"n": Mlp([2, 1], rng=rng)}), p)
    p.write_text(p.read_text()[:40])
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
