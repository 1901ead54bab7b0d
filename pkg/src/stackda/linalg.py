"""Dense matrix primitives shared by the adaptation losses and the ALM solver.

A "matrix" throughout the package is a 2-D float64 numpy array with one
sample per row.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NumericFailure(RuntimeError):
    """A numerical routine failed to produce a usable result."""


class DegenerateInput(ValueError):
    """Input is well-typed but too small or too degenerate for the operation."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1) if m.size else m.reshape(0, 0)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


@dataclass(frozen=True)
class SvdResult:
    U: np.ndarray
    singular_values: np.ndarray
    Vt: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.singular_values) @ self.Vt


def svd(a) -> SvdResult:
    """Thin SVD with singular values sorted non-increasing."""
    a = as_matrix(a)
    if a.size == 0:
        m, n = a.shape
        return SvdResult(np.zeros((m, 0)), np.zeros(0), np.zeros((0, n)))
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"SVD did not converge for shape {a.shape}") from exc
    return SvdResult(u, s, vt)


def nuclear_norm(a) -> float:
    return float(np.sum(svd(a).singular_values))


def covariance(x) -> np.ndarray:
    """Column covariance with the n-1 divisor."""
    x = as_matrix(x)
    n = x.shape[0]
    if n < 2:
        raise DegenerateInput(f"covariance needs at least 2 rows, got {n}")
    xc = x - x.mean(axis=0)
    c = xc.T @ xc / (n - 1)
    return 0.5 * (c + c.T)


def sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clipped at zero."""
    d = (
        np.sum(x * x, axis=1)[:, None]
        + np.sum(y * y, axis=1)[None, :]
        - 2.0 * (x @ y.T)
    )
    return np.maximum(d, 0.0)


def rbf_kernel_matrix(x, y, bandwidth: float) -> np.ndarray:
    """K[i, j] = exp(-||x_i - y_j||^2 / (2 * bandwidth))."""
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"column mismatch: {x.shape[1]} vs {y.shape[1]}")
    return np.exp(-sq_dists(x, y) / (2.0 * bandwidth))


def median_sq_dist(x, y) -> float:
    """Median pairwise squared distance over the pooled rows of ``x`` and ``y``.

    Zero distances are dropped before taking the median; when every pair
    coincides the fallback value 1.0 is returned.
    """
    z = np.vstack([as_matrix(x, "x"), as_matrix(y, "y")])
    if z.shape[0] < 2:
        raise DegenerateInput("median_sq_dist needs at least 2 pooled rows")
    iu = np.triu_indices(z.shape[0], k=1)
    d = sq_dists(z, z)[iu]
    d = d[d > 0]
    if d.size == 0:
        return 1.0
    return float(np.median(d))
