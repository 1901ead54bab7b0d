"""Small fully-connected networks with hand-written backprop and momentum SGD."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

RELU = "relu"
NONE = "none"


@dataclass
class Dense:
    weights: np.ndarray  # (in, out)
    bias: np.ndarray  # (out,)
    activation: str = NONE

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ValueError(f"inconsistent shapes W{self.weights.shape} b{self.bias.shape}")
        if self.activation not in (RELU, NONE):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_in(self) -> int:
        return self.weights.shape[0]

    @property
    def n_out(self) -> int:
        return self.weights.shape[1]


@dataclass
class Mlp:
    layers: List[Dense] = field(default_factory=list)

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_out != b.n_in:
                raise ValueError(f"layer widths do not chain: {a.n_out} -> {b.n_in}")

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    @property
    def architecture(self) -> list:
        return [[l.n_in, l.n_out, l.activation] for l in self.layers]

    def params(self) -> list:
        """Parameter arrays in layer order: W0, b0, W1, b1, ..."""
        out = []
        for l in self.layers:
            out += [l.weights, l.bias]
        return out

    def copy(self) -> "Mlp":
        return Mlp([Dense(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers])


def init_mlp(widths: Sequence[int], rng: np.random.Generator, hidden_activation: str = RELU) -> Mlp:
    """Glorot-uniform weights, zero biases; the last layer is linear."""
    layers = []
    n = len(widths) - 1
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        lim = np.sqrt(6.0 / (a + b))
        w = rng.uniform(-lim, lim, size=(a, b))
        layers.append(Dense(w, np.zeros(b), NONE if i == n - 1 else hidden_activation))
    return Mlp(layers)


def forward(net: Mlp, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.n_in:
        raise ValueError(f"expected input with {net.n_in} columns, got shape {x.shape}")
    cache = [x]
    h = x
    for l in net.layers:
        z = h @ l.weights + l.bias
        h = np.maximum(z, 0.0) if l.activation == RELU else z
        cache.append(z)
    return h, cache


def backward(net: Mlp, cache, grad_out):
    """Return (param_grads in ``Mlp.params`` order, grad wrt input)."""
    if len(cache) != len(net.layers) + 1:
        raise ValueError("cache does not belong to this network")
    g = np.asarray(grad_out, dtype=np.float64)
    grads = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        l = net.layers[i]
        z = cache[i + 1]
        if g.shape != z.shape:
            raise ValueError(f"gradient shape {g.shape} does not match layer output {z.shape}")
        if l.activation == RELU:
            g = g * (z > 0)
        h_in = cache[i] if i == 0 else _activate(net.layers[i - 1], cache[i])
        grads[2 * i] = h_in.T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ l.weights.T
    return grads, g


def _activate(layer: Dense, z):
    return np.maximum(z, 0.0) if layer.activation == RELU else z


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits, labels):
    """Mean cross-entropy and its gradient wrt the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError("one label per row required")
    if n and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(logsum - z[rows, labels]))
    grad = softmax(logits)
    grad[rows, labels] -= 1.0
    return loss, grad / n


@dataclass(frozen=True)
class SgdConfig:
    eta0: float = 0.01
    alpha: float = 10.0
    beta: float = 0.75
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ValueError("eta0 must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


def lr_at(cfg: SgdConfig, p: float) -> float:
    """eta0 / (1 + alpha p)^beta for training progress ``p`` in [0, 1]."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"progress must lie in [0, 1], got {p}")
    return cfg.eta0 / (1.0 + cfg.alpha * p) ** cfg.beta


def zero_velocity(params) -> list:
    return [np.zeros_like(p) for p in params]


def sgd_step(params, grads, velocity, lr: float, momentum: float):
    """Heavy-ball update in place: v <- momentum v - lr g; p <- p + v.

    ``params`` may be an :class:`Mlp` or its ``params()`` list.
    """
    if isinstance(params, Mlp):
        params = params.params()
    if len(params) != len(grads) or len(params) != len(velocity):
        raise ValueError("params, grads and velocity must align")
    for p, g, v in zip(params, grads, velocity):
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(f"shape mismatch {p.shape} / {g.shape} / {v.shape}")
        v *= momentum
        v -= lr * g
        p += v
    return params, velocity


def train_classifier(net: Mlp, x, y, cfg: SgdConfig, rng: np.random.Generator, monitor=None) -> list:
    """Plain supervised minibatch training of ``net`` in place.

    Returns one dict per epoch with the mean batch loss and, when ``monitor``
    is an ``(x, y)`` pair, the accuracy on it.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = x.shape[0]
    params = net.params()
    vel = zero_velocity(params)
    n_batches = max(1, -(-n // cfg.batch_size))
    total = cfg.epochs * n_batches
    step = 0
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        acc = 0.0
        for b in range(n_batches):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            logits, cache = forward(net, x[idx])
            loss, g = softmax_xent(logits, y[idx])
            grads, _ = backward(net, cache, g)
            sgd_step(params, grads, vel, lr_at(cfg, step / total), cfg.momentum)
            step += 1
            acc += loss
        row = {"epoch": epoch + 1, "loss": acc / n_batches}
        if monitor is not None:
            mx, my = monitor
            row["monitor_acc"] = float(np.mean(np.argmax(forward(net, mx)[0], axis=1) == my))
        history.append(row)
    return history
