"""Low-rank representation between domains, solved by inexact ALM.

Problem (data as columns, ``A = xs.T``, ``X = xt.T``)::

    min ||Z||_* + lambda_e * ||E||_1   s.t.   X = A Z + E

with the auxiliary split ``Z = J`` so each block has a closed-form update.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .discrepancy import LossWithGrad
from .linalg import NumericFailure, as_matrix, nuclear_norm


@dataclass(frozen=True)
class AlmConfig:
    lambda_e: float = 1.0
    mu0: float = 1e-3
    rho: float = 1.2
    mu_max: float = 1e8
    tol: float = 1e-6
    max_iters: int = 500

    def __post_init__(self):
        if not self.lambda_e > 0:
            raise ValueError("lambda_e must be positive")
        if not 0 < self.mu0 < self.mu_max:
            raise ValueError("need 0 < mu0 < mu_max")
        if not self.rho > 1:
            raise ValueError("rho must exceed 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class AlmState:
    Z: np.ndarray
    J: np.ndarray
    E: np.ndarray
    Y1: np.ndarray
    Y2: np.ndarray
    mu: float
    iterations: int
    residual_primal: float
    residual_coupling: float
    converged: bool
    objective: float
    residual_history: list


def svt(a, tau: float) -> np.ndarray:
    """Singular value thresholding: the proximal map of ``tau * ||.||_*``."""
    return _svt(as_matrix(a), tau)


def _svt(a: np.ndarray, tau: float) -> np.ndarray:
    if a.size == 0:
        return a.copy()
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"SVD did not converge for shape {a.shape}") from exc
    k = int(np.count_nonzero(s > tau))
    if k == 0:
        return np.zeros_like(a)
    return (u[:, :k] * (s[:k] - tau)) @ vt[:k]


def soft_threshold(a, tau: float) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return np.sign(a) * np.maximum(np.abs(a) - tau, 0.0)


def lrr_objective(Z: np.ndarray, E: np.ndarray, lambda_e: float) -> float:
    return nuclear_norm(Z) + lambda_e * float(np.abs(E).sum())


def solve_lrr(xs, xt, cfg: AlmConfig = AlmConfig()) -> AlmState:
    """Reconstruct target samples from source samples with a low-rank code.

    ``Z`` has shape ``(n_source, n_target)`` and ``E`` has the shape of
    ``xt.T``. Hitting ``max_iters`` is not an error: the state comes back with
    ``converged=False`` holding the iterate with the smallest primal residual.
    """
    xs = as_matrix(xs, "xs")
    xt = as_matrix(xt, "xt")
    if xs.shape[1] != xt.shape[1]:
        raise ValueError(f"feature dimension mismatch: {xs.shape[1]} vs {xt.shape[1]}")
    A = xs.T
    X = xt.T
    m, ns = A.shape
    nt = X.shape[1]

    Z = np.zeros((ns, nt))
    J = np.zeros((ns, nt))
    E = np.zeros((m, nt))
    Y1 = np.zeros((m, nt))
    Y2 = np.zeros((ns, nt))
    mu = cfg.mu0
    AtA = A.T @ A
    try:
        chol = cho_factor(np.eye(ns) + AtA)
    except LinAlgError as exc:
        raise NumericFailure("I + A^T A is not numerically positive definite") from exc
    AtX = A.T @ X
    x_scale = max(1.0, float(np.linalg.norm(X)))

    best = None
    history = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        J = _svt(Z + Y2 / mu, 1.0 / mu)
        rhs = AtX - A.T @ E + J + (A.T @ Y1 - Y2) / mu
        Z = cho_solve(chol, rhs, check_finite=False)
        AZ = A @ Z
        E = soft_threshold(X - AZ + Y1 / mu, cfg.lambda_e / mu)
        r1 = X - AZ - E
        r2 = Z - J
        res1 = float(np.linalg.norm(r1))
        res2 = float(np.linalg.norm(r2))
        if not (np.isfinite(res1) and np.isfinite(res2)):
            raise NumericFailure(f"ALM iterate became non-finite at iteration {it}")
        history.append(res1)
        # iterates are rebound, never mutated, so keeping references is safe
        if best is None or res1 <= best[0]:
            best = (res1, res2, Z, J, E, Y1, Y2, mu, it)
        if res1 <= cfg.tol * x_scale and res2 <= cfg.tol * max(1.0, float(np.linalg.norm(Z))):
            converged = True
            break
        Y1 = Y1 + mu * r1
        Y2 = Y2 + mu * r2
        mu = min(cfg.rho * mu, cfg.mu_max)

    if converged:
        res1, res2 = history[-1], float(np.linalg.norm(Z - J))
    else:
        res1, res2, Z, J, E, Y1, Y2, mu, _ = best
    return AlmState(
        Z=Z, J=J, E=E, Y1=Y1, Y2=Y2, mu=mu, iterations=it,
        residual_primal=res1, residual_coupling=res2, converged=converged,
        objective=lrr_objective(Z, E, cfg.lambda_e), residual_history=history,
    )


def residual_surrogate(xs, xt, Z: np.ndarray, E: np.ndarray) -> LossWithGrad:
    """0.5 * ||xt.T - xs.T Z - E||_F^2 with ``Z`` and ``E`` held fixed."""
    xs = as_matrix(xs, "xs")
    xt = as_matrix(xt, "xt")
    R = xt.T - xs.T @ Z - E
    return LossWithGrad(0.5 * float(np.sum(R * R)), -(Z @ R.T), R.T.copy())


def lowrank_penalty(xs, xt, cfg: AlmConfig = AlmConfig()) -> LossWithGrad:
    """Low-rank discrepancy value with gradients of the frozen-solution residual.

    The value is the LRR objective at the solver's (converged or best) iterate.
    Gradients treat that iterate as constant and differentiate
    :func:`residual_surrogate`.
    """
    state = solve_lrr(xs, xt, cfg)
    sur = residual_surrogate(xs, xt, state.Z, state.E)
    return LossWithGrad(
        state.objective, sur.grad_source, sur.grad_target,
        {"state": state, "surrogate": sur.value},
    )
