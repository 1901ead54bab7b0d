"""Domain discrepancy penalties with analytic feature gradients.

Every penalty returns a :class:`LossWithGrad` so the trainer can treat the
kernel, covariance and low-rank losses uniformly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .linalg import DegenerateInput, as_matrix, covariance, median_sq_dist, rbf_kernel_matrix

DEFAULT_BANDWIDTH_SCALES = (0.25, 0.5, 1.0, 2.0, 4.0)


class Method(str, Enum):
    MMD = "mmd"
    CMMD = "cmmd"
    LOWRANK = "lowrank"
    CORAL = "coral"


class NoOverlappingClass(ValueError):
    """No class is present on both sides of a CMMD batch."""


@dataclass(frozen=True)
class DiscrepancyMethod:
    """Which discrepancy to use and its hyper-parameters.

    ``bandwidths`` pins the kernel bandwidths (squared length scales). When it
    is ``None`` they are taken as the median squared distance of the current
    inputs times each entry of ``bandwidth_scales``.
    """

    tag: Method
    bandwidths: Optional[tuple] = None
    bandwidth_scales: tuple = DEFAULT_BANDWIDTH_SCALES
    alm: Optional["AlmConfig"] = None  # noqa: F821 - lowrank only

    def __post_init__(self):
        object.__setattr__(self, "tag", Method(self.tag))
        if self.bandwidths is not None:
            bws = tuple(float(b) for b in self.bandwidths)
            if not bws or any(not b > 0 for b in bws):
                raise ValueError("bandwidths must be a non-empty list of positive reals")
            object.__setattr__(self, "bandwidths", bws)
        if not self.bandwidth_scales or any(not s > 0 for s in self.bandwidth_scales):
            raise ValueError("bandwidth_scales must be non-empty and positive")
        if self.tag is Method.LOWRANK and self.alm is None:
            from .lowrank import AlmConfig

            object.__setattr__(self, "alm", AlmConfig())

    @property
    def lambda_e(self) -> float:
        return self.alm.lambda_e

    def resolve_bandwidths(self, xs: np.ndarray, xt: np.ndarray) -> tuple:
        if self.bandwidths is not None:
            return self.bandwidths
        base = median_sq_dist(xs, xt)
        return tuple(base * s for s in self.bandwidth_scales)


@dataclass
class LossWithGrad:
    value: float
    grad_source: np.ndarray
    grad_target: np.ndarray
    info: dict = field(default_factory=dict)


def _check_pair(xs, xt):
    xs = as_matrix(xs, "xs")
    xt = as_matrix(xt, "xt")
    if xs.shape[1] != xt.shape[1]:
        raise ValueError(f"feature dimension mismatch: {xs.shape[1]} vs {xt.shape[1]}")
    return xs, xt


def _kernel_pull(k: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """sum_j k[i, j] * (x_i - y_j) for every i."""
    return k.sum(axis=1)[:, None] * x - k @ y


def _mmd_fixed(xs: np.ndarray, xt: np.ndarray, bandwidths: Sequence[float]) -> LossWithGrad:
    ns, nt = xs.shape[0], xt.shape[0]
    value = 0.0
    gs = np.zeros_like(xs)
    gt = np.zeros_like(xt)
    for h in bandwidths:
        kss = rbf_kernel_matrix(xs, xs, h)
        ktt = rbf_kernel_matrix(xt, xt, h)
        kst = rbf_kernel_matrix(xs, xt, h)
        value += kss.sum() / ns**2 + ktt.sum() / nt**2 - 2.0 * kst.sum() / (ns * nt)
        # dk(a, b)/da = -k(a, b) (a - b) / h
        gs += (-2.0 / (ns**2 * h)) * _kernel_pull(kss, xs, xs)
        gs += (2.0 / (ns * nt * h)) * _kernel_pull(kst, xs, xt)
        gt += (-2.0 / (nt**2 * h)) * _kernel_pull(ktt, xt, xt)
        gt += (2.0 / (ns * nt * h)) * _kernel_pull(kst.T, xt, xs)
    return LossWithGrad(float(value), gs, gt, {"bandwidths": tuple(bandwidths)})


def mmd(xs, xt, method: DiscrepancyMethod) -> LossWithGrad:
    """Biased multi-kernel MMD^2 between the rows of ``xs`` and ``xt``."""
    xs, xt = _check_pair(xs, xt)
    if xs.shape[0] < 1 or xt.shape[0] < 1:
        raise DegenerateInput("mmd needs at least one row per domain")
    return _mmd_fixed(xs, xt, method.resolve_bandwidths(xs, xt))


def cmmd(xs, ys, xt, yt_pseudo, n_classes: int, method: DiscrepancyMethod) -> LossWithGrad:
    """Class-conditional MMD averaged over classes present in both domains.

    Bandwidths are resolved once on the full batch and shared by every class.
    Rows of classes missing from either side get zero gradient.
    """
    xs, xt = _check_pair(xs, xt)
    ys = np.asarray(ys, dtype=np.int64)
    yt = np.asarray(yt_pseudo, dtype=np.int64)
    if ys.shape != (xs.shape[0],) or yt.shape != (xt.shape[0],):
        raise ValueError("label vectors must match row counts")
    for lab in (ys, yt):
        if lab.size and (lab.min() < 0 or lab.max() >= n_classes):
            raise ValueError(f"labels must lie in [0, {n_classes})")
    bws = method.resolve_bandwidths(xs, xt)
    present = [c for c in range(n_classes) if np.any(ys == c) and np.any(yt == c)]
    if not present:
        raise NoOverlappingClass("no class has both source and target rows in this batch")
    gs = np.zeros_like(xs)
    gt = np.zeros_like(xt)
    value = 0.0
    w = 1.0 / len(present)
    for c in present:
        si = np.flatnonzero(ys == c)
        ti = np.flatnonzero(yt == c)
        part = _mmd_fixed(xs[si], xt[ti], bws)
        value += w * part.value
        gs[si] += w * part.grad_source
        gt[ti] += w * part.grad_target
    return LossWithGrad(value, gs, gt, {"bandwidths": bws, "classes": present})


def coral(xs, xt) -> LossWithGrad:
    """Squared Frobenius distance of covariances scaled by 1 / (4 m^2)."""
    xs, xt = _check_pair(xs, xt)
    ns, nt = xs.shape[0], xt.shape[0]
    if ns < 2 or nt < 2:
        raise DegenerateInput("coral needs at least two rows per domain")
    m = xs.shape[1]
    diff = covariance(xs) - covariance(xt)
    value = float(np.sum(diff * diff)) / (4.0 * m * m)
    g_cov = diff / (2.0 * m * m)
    # centred columns sum to zero, so the mean-removal term vanishes
    gs = (2.0 / (ns - 1)) * (xs - xs.mean(axis=0)) @ g_cov
    gt = (-2.0 / (nt - 1)) * (xt - xt.mean(axis=0)) @ g_cov
    return LossWithGrad(value, gs, gt)


def adaptation_loss(xs, ys, xt, yt_pseudo, method: DiscrepancyMethod, n_classes: int | None = None) -> LossWithGrad:
    """Dispatch to the penalty selected by ``method.tag``."""
    tag = method.tag
    if tag is Method.MMD:
        return mmd(xs, xt, method)
    if tag is Method.CMMD:
        if n_classes is None:
            raise ValueError("cmmd requires n_classes")
        return cmmd(xs, ys, xt, yt_pseudo, n_classes, method)
    if tag is Method.CORAL:
        return coral(xs, xt)
    if tag is Method.LOWRANK:
        from .lowrank import lowrank_penalty

        return lowrank_penalty(xs, xt, method.alm)
    raise ValueError(f"unknown method {tag!r}")
