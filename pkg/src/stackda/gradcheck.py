"""Central finite differences for checking analytic gradients."""
from __future__ import annotations

import numpy as np


def numeric_grad(fun, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """d fun() / d x by central differences, perturbing ``x`` in place."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        up = fun()
        x[idx] = orig - step
        down = fun()
        x[idx] = orig
        g[idx] = (up - down) / (2.0 * step)
    return g


def rel_error(analytic, numeric, floor: float = 1e-6) -> float:
    """Largest entrywise |a - n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {n.shape}")
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def relu_margin(net, x) -> float:
    """Smallest |pre-activation| over the ReLU units of ``net`` on input ``x``.

    Finite differences are only meaningful when this exceeds the step.
    """
    from .nn import RELU, forward

    _, cache = forward(net, x)
    zs = [z for layer, z in zip(net.layers, cache[1:]) if layer.activation == RELU]
    return min((float(np.min(np.abs(z))) for z in zs if z.size), default=np.inf)
