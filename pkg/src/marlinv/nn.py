"""Small dense networks with exact backprop and Adam, in float64 numpy.

Only what the actor/critic agents need: ReLU hidden layers, a linear or
softmax output, mean-squared and (weighted) cross-entropy losses, and a JSON
checkpoint format.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT = "marlinv-checkpoint"
CHECKPOINT_VERSION = 1

ACTIVATIONS = ("relu", "linear", "softmax")


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint."""


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class Mlp:
    """Fully connected network.

    ``sizes`` lists layer widths from input to output; hidden layers use
    ReLU and ``output`` selects the final activation.
    """

    def __init__(self, sizes, output="linear", rng=None, weights=None, biases=None, output_gain=1.0):
        if output not in ("linear", "softmax"):
            raise ValueError(f"unknown output activation {output!r}")
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = [int(s) for s in sizes]
        self.activations = ["relu"] * (len(sizes) - 2) + [output]
        if weights is None:
            rng = np.random.default_rng() if rng is None else rng
            weights, biases = [], []
            for k, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
                limit = np.sqrt(6.0 / n_in)
                if k == len(self.sizes) - 2:
                    limit *= output_gain
                weights.append(rng.uniform(-limit, limit, size=(n_in, n_out)))
                biases.append(np.zeros(n_out))
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        for w, b, n_in, n_out in zip(self.weights, self.biases, self.sizes[:-1], self.sizes[1:]):
            if w.shape != (n_in, n_out) or b.shape != (n_out,):
                raise ValueError(f"parameter shape mismatch for layer {n_in}->{n_out}")

    @property
    def output(self) -> str:
        return self.activations[-1]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp(self.sizes, self.output, weights=[w.copy() for w in self.weights],
                   biases=[b.copy() for b in self.biases])

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"input has {x.shape[-1]} features, network expects {self.sizes[0]}")
        return x

    def logits(self, x) -> np.ndarray:
        """Pre-activation of the output layer."""
        h = self._check(x)
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                h = np.maximum(h, 0.0)
        return h

    def predict(self, x) -> np.ndarray:
        z = self.logits(x)
        return softmax(z) if self.output == "softmax" else z

    def forward(self, x):
        """Return ``(inputs_per_layer, pre_activations)`` for backprop."""
        h = self._check(x)
        hs, zs = [], []
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            hs.append(h)
            z = h @ w + b
            zs.append(z)
            h = np.maximum(z, 0.0) if k < last else z
        return hs, zs

    def backward(self, cache, dz_out) -> list[np.ndarray]:
        """Gradients of a loss given its derivative w.r.t. the output pre-activation."""
        hs, zs = cache
        grads = [None] * (2 * len(self.weights))
        dz = dz_out
        for k in range(len(self.weights) - 1, -1, -1):
            grads[2 * k] = hs[k].T @ dz
            grads[2 * k + 1] = dz.sum(axis=0)
            if k > 0:
                dz = (dz @ self.weights[k].T) * (zs[k - 1] > 0)
        return grads


def mse_loss_and_grad(net: Mlp, x, target):
    """Loss ``mean(0.5 * (out - target)**2)`` over the batch, and its gradient."""
    x = np.atleast_2d(x)
    cache = net.forward(x)
    out = cache[1][-1]
    target = np.asarray(target, dtype=float).reshape(out.shape)
    diff = out - target
    n = out.shape[0]
    return float(0.5 * (diff**2).sum() / n), net.backward(cache, diff / n)


def backward_mse(net: Mlp, x, target):
    return mse_loss_and_grad(net, x, target)[1]


def cross_entropy_loss_and_grad(net: Mlp, x, target, weight=None):
    """Loss ``mean(weight * -sum(target * log softmax(z)))`` and its gradient.

    With one-hot targets and ``weight = advantage`` this is the policy-gradient
    loss of vanilla actor-critic.
    """
    x = np.atleast_2d(x)
    target = np.atleast_2d(np.asarray(target, dtype=float))
    if not np.allclose(target.sum(axis=-1), 1.0, atol=1e-9):
        raise ValueError("target distribution must sum to 1")
    cache = net.forward(x)
    z = cache[1][-1]
    if target.shape != z.shape:
        raise ValueError(f"target shape {target.shape} vs output {z.shape}")
    n = z.shape[0]
    w = np.ones(n) if weight is None else np.asarray(weight, dtype=float).reshape(n)
    logp = log_softmax(z)
    loss = float((w * -(target * logp).sum(axis=-1)).sum() / n)
    dz = (np.exp(logp) - target) * (w / n)[:, None]
    return loss, net.backward(cache, dz)


def backward_cross_entropy(net: Mlp, x, target, weight=None):
    return cross_entropy_loss_and_grad(net, x, target, weight)[1]


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: Mlp, lr: float = 1e-3, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in net.params()], [np.zeros_like(p) for p in net.params()],
                   lr=lr, **kw)


def adam_step(net: Mlp, grads, state: AdamState) -> None:
    """In-place bias-corrected Adam update of ``net`` and ``state``."""
    params = net.params()
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ValueError("gradient shapes do not match the network")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# --- checkpoints -------------------------------------------------------------

def net_to_dict(net: Mlp) -> dict:
    return {
        "sizes": net.sizes,
        "activations": net.activations,
        "weights": [w.ravel().tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def net_from_dict(d: dict) -> Mlp:
    sizes = d["sizes"]
    weights = [np.array(w, dtype=float).reshape(a, b) for w, a, b in zip(d["weights"], sizes[:-1], sizes[1:])]
    return Mlp(sizes, d["activations"][-1], weights=weights, biases=[np.array(b) for b in d["biases"]])


def adam_to_dict(s: AdamState) -> dict:
    return {"step": s.step, "lr": s.lr, "beta1": s.beta1, "beta2": s.beta2, "eps": s.eps,
            "m": [a.ravel().tolist() for a in s.m], "v": [a.ravel().tolist() for a in s.v]}


def adam_from_dict(d: dict, net: Mlp) -> AdamState:
    shapes = [p.shape for p in net.params()]
    return AdamState(
        m=[np.array(a, dtype=float).reshape(sh) for a, sh in zip(d["m"], shapes)],
        v=[np.array(a, dtype=float).reshape(sh) for a, sh in zip(d["v"], shapes)],
        step=d["step"], lr=d["lr"], beta1=d["beta1"], beta2=d["beta2"], eps=d["eps"],
    )


@dataclass
class Bundle:
    """Named networks with their optimizer states and free-form metadata."""

    nets: dict
    optimizers: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)


def save_checkpoint(bundle: Bundle, path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "metadata": bundle.metadata,
        "nets": {k: net_to_dict(n) for k, n in bundle.nets.items()},
        "optimizers": {k: adam_to_dict(s) for k, s in bundle.optimizers.items()},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> Bundle:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: corrupt checkpoint ({e})") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {doc.get('version')} != {CHECKPOINT_VERSION}")
    try:
        nets = {k: net_from_dict(d) for k, d in doc["nets"].items()}
        opts = {k: adam_from_dict(d, nets[k]) for k, d in doc.get("optimizers", {}).items()}
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: malformed checkpoint ({e})") from None
    return Bundle(nets, opts, doc.get("metadata", {}))


def checksum(nets) -> str:
    """Hash of all parameters; identical weights give identical checksums."""
    h = hashlib.sha256()
    for net in nets:
        for p in net.params():
            h.update(np.ascontiguousarray(p).tobytes())
    return h.hexdigest()
