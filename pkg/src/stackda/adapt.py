"""One adapted base learner: shared extractor, parallel substructures, classifier.

The training objective is the source cross-entropy plus ``lambda_tradeoff``
times the sum over substructures of the discrepancy between that
substructure's source and target representations.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .data import LabeledSet
from .discrepancy import DiscrepancyMethod, Method, NoOverlappingClass, adaptation_loss
from .nn import Mlp, SgdConfig, backward, forward, init_mlp, lr_at, sgd_step, softmax, softmax_xent, zero_velocity

log = logging.getLogger(__name__)

# (depth, width) of the four parallel branches: two deeper, two single-layer
DEFAULT_SUBSTRUCTURES = ((2, 8), (3, 8), (1, 4), (1, 4))


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class BaseLearner:
    g: Mlp
    substructures: List[Mlp]
    f: Mlp
    method: DiscrepancyMethod
    n_classes: int

    def __post_init__(self):
        for s in self.substructures:
            if s.n_in != self.g.n_out:
                raise ValueError("every substructure must consume the extractor output")
        if self.f.n_in != sum(s.n_out for s in self.substructures):
            raise ValueError("classifier input must equal the summed substructure widths")
        if self.f.n_out != self.n_classes:
            raise ValueError("classifier output must equal n_classes")

    def networks(self) -> List[Mlp]:
        return [self.g, *self.substructures, self.f]

    def params(self) -> list:
        return [p for net in self.networks() for p in net.params()]

    def copy(self) -> "BaseLearner":
        return BaseLearner(self.g.copy(), [s.copy() for s in self.substructures],
                           self.f.copy(), self.method, self.n_classes)


def build_base_learner(n_features: int, n_classes: int, method: DiscrepancyMethod,
                       rng: np.random.Generator, extractor_widths: Sequence[int] = (32, 16),
                       substructures: Sequence = DEFAULT_SUBSTRUCTURES,
                       classifier_hidden: int = 32) -> BaseLearner:
    g = init_mlp([n_features, *extractor_widths], rng)
    h = extractor_widths[-1]
    subs = []
    for depth, width in substructures:
        subs.append(init_mlp([h] * depth + [width], rng))
    total = sum(w for _, w in substructures)
    widths = [total, classifier_hidden, n_classes] if classifier_hidden else [total, n_classes]
    f = init_mlp(widths, rng)
    return BaseLearner(g, subs, f, method, n_classes)


@dataclass(frozen=True)
class TrainConfig:
    sgd: SgdConfig = SgdConfig()
    lambda_tradeoff: float = 1.0
    warmup_epochs: int = 3
    pseudo_refresh: bool = True

    def __post_init__(self):
        if self.lambda_tradeoff < 0:
            raise ValueError("lambda_tradeoff must be non-negative")
        if not 0 <= self.warmup_epochs <= self.sgd.epochs:
            raise ValueError("warmup_epochs must lie in [0, epochs]")


def _forward_features(bl: BaseLearner, x):
    h, cg = forward(bl.g, x)
    outs, caches = [], []
    for s in bl.substructures:
        r, c = forward(s, h)
        outs.append(r)
        caches.append(c)
    return h, cg, outs, caches


def extract(bl: BaseLearner, x):
    """Per-substructure representations and their column-wise concatenation."""
    _, _, outs, _ = _forward_features(bl, x)
    return outs, np.hstack(outs)


def predict_logits(bl: BaseLearner, x) -> np.ndarray:
    _, concat = extract(bl, x)
    return forward(bl.f, concat)[0]


def predict_proba(bl: BaseLearner, x) -> np.ndarray:
    return softmax(predict_logits(bl, x))


def predict(bl: BaseLearner, x) -> np.ndarray:
    # argmax returns the first maximum, i.e. ties go to the lower class
    return np.argmax(predict_logits(bl, x), axis=1)


@dataclass
class Eq1Result:
    total: float
    class_loss: float
    adapt_loss: float
    grads: list
    per_substructure: list = field(default_factory=list)


def eq1_loss(bl: BaseLearner, xs, ys, xt, yt_pseudo, lambda_tradeoff: float) -> Eq1Result:
    """Joint objective and gradients aligned with ``bl.params()``.

    The discrepancy term is skipped entirely (reported as 0) when
    ``lambda_tradeoff`` is 0.
    """
    adapt_on = lambda_tradeoff > 0
    _, cgs, rs, cs_s = _forward_features(bl, xs)
    if adapt_on:
        _, cgt, rt, cs_t = _forward_features(bl, xt)
    concat = np.hstack(rs)
    logits, cf = forward(bl.f, concat)
    class_loss, g_logits = softmax_xent(logits, ys)
    grads_f, g_concat = backward(bl.f, cf, g_logits)

    widths = np.cumsum([0] + [r.shape[1] for r in rs])
    g_hs = 0.0
    g_ht = 0.0
    grads_subs = []
    adapt = 0.0
    parts = []
    for i, s in enumerate(bl.substructures):
        g_rs = g_concat[:, widths[i]:widths[i + 1]]
        if adapt_on:
            d = adaptation_loss(rs[i], ys, rt[i], yt_pseudo, bl.method, bl.n_classes)
            adapt += d.value
            parts.append(d.value)
            g_rs = g_rs + lambda_tradeoff * d.grad_source
            gp_t, gh_t = backward(s, cs_t[i], lambda_tradeoff * d.grad_target)
            g_ht = g_ht + gh_t
        gp_s, gh_s = backward(s, cs_s[i], g_rs)
        g_hs = g_hs + gh_s
        if adapt_on:
            gp_s = [a + b for a, b in zip(gp_s, gp_t)]
        grads_subs.extend(gp_s)

    grads_g, _ = backward(bl.g, cgs, g_hs)
    if adapt_on:
        gt_g, _ = backward(bl.g, cgt, g_ht)
        grads_g = [a + b for a, b in zip(grads_g, gt_g)]
    total = class_loss + lambda_tradeoff * adapt
    return Eq1Result(total, class_loss, adapt, grads_g + grads_subs + grads_f, parts)


class _Cycler:
    """Endless stream of indices: successive permutations of range(n)."""

    def __init__(self, n: int, rng: np.random.Generator, name: str):
        self.n, self.rng, self.name = n, rng, name
        self.buf = np.zeros(0, dtype=np.int64)

    def take(self, k: int) -> np.ndarray:
        while len(self.buf) < k:
            if len(self.buf) or k > self.n:
                log.debug("%s domain wraps: %d rows, %d requested", self.name, self.n, k)
            self.buf = np.concatenate([self.buf, self.rng.permutation(self.n)])
        out, self.buf = self.buf[:k], self.buf[k:]
        return out


def balanced_batches(source: LabeledSet, target: LabeledSet, batch_size: int,
                     rng: np.random.Generator, n_batches: Optional[int] = None):
    """Yield ``(xs, ys, xt, target_idx)`` with ``batch_size`` rows from each domain.

    Each domain is consumed as successive random permutations, so rows are
    drawn without replacement until a domain is exhausted and then wrap.
    """
    if len(source) == 0 or len(target) == 0:
        raise ValueError("both domains need at least one row")
    if n_batches is None:
        n_batches = -(-max(len(source), len(target)) // batch_size)
    cs = _Cycler(len(source), rng, "source")
    ct = _Cycler(len(target), rng, "target")
    for _ in range(n_batches):
        si = cs.take(batch_size)
        ti = ct.take(batch_size)
        yield source.features[si], source.labels[si], target.features[ti], ti


def sample_balanced_batch(source: LabeledSet, target: LabeledSet, batch_size: int, rng: np.random.Generator):
    return next(balanced_batches(source, target, batch_size, rng, n_batches=1))


def refresh_pseudo_labels(bl: BaseLearner, target: LabeledSet) -> np.ndarray:
    return predict(bl, target.features)


def accuracy(bl: BaseLearner, ds: LabeledSet) -> Optional[float]:
    if ds.labels is None or len(ds) == 0:
        return None
    return float(np.mean(predict(bl, ds.features) == ds.labels))


def train_base(bl: BaseLearner, source: LabeledSet, target: LabeledSet, cfg: TrainConfig,
               monitor: Optional[LabeledSet] = None):
    """Train a copy of ``bl``; returns ``(trained, history)``.

    The first ``cfg.warmup_epochs`` epochs use the classification loss only.
    Target labels, if present, are read only to report ``target_acc``.
    ``monitor`` is an optional labeled set reported as ``monitor_acc``.
    """
    if source.labels is None:
        raise ValueError("source set must be labeled")
    if source.n_features != target.n_features:
        raise ValueError("source and target feature widths differ")
    bl = bl.copy()
    sgd = cfg.sgd
    rng = np.random.default_rng([sgd.seed, 1])
    params = bl.params()
    vel = zero_velocity(params)
    n_batches = -(-max(len(source), len(target)) // sgd.batch_size)
    total_steps = sgd.epochs * n_batches
    needs_pseudo = bl.method.tag is Method.CMMD
    pseudo = np.zeros(len(target), dtype=np.int64)
    history = []
    step = 0
    for epoch in range(sgd.epochs):
        lam = 0.0 if epoch < cfg.warmup_epochs else cfg.lambda_tradeoff
        if needs_pseudo and lam > 0 and (cfg.pseudo_refresh or epoch == cfg.warmup_epochs):
            pseudo = refresh_pseudo_labels(bl, target)
        lr0 = lr_at(sgd, step / total_steps)
        sums = np.zeros(2)
        for b, (xs, ys, xt, ti) in enumerate(balanced_batches(source, target, sgd.batch_size, rng, n_batches)):
            try:
                res = eq1_loss(bl, xs, ys, xt, pseudo[ti], lam)
            except NoOverlappingClass as exc:
                raise NoOverlappingClass(f"epoch {epoch}, batch {b}: {exc}") from exc
            if not np.isfinite(res.total) or not all(np.all(np.isfinite(g)) for g in res.grads):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {b}",
                    {"epoch": epoch, "batch": b, "class_loss": res.class_loss,
                     "adapt_loss": res.adapt_loss, "total": res.total},
                )
            sgd_step(params, res.grads, vel, lr_at(sgd, step / total_steps), sgd.momentum)
            step += 1
            sums += (res.class_loss, res.adapt_loss)
        row = {
            "epoch": epoch + 1,
            "class_loss": sums[0] / n_batches,
            "adapt_loss": sums[1] / n_batches,
            "lr": lr0,
            "source_acc": accuracy(bl, source),
            "target_acc": accuracy(bl, target),
        }
        if monitor is not None:
            row["monitor_acc"] = accuracy(bl, monitor)
        history.append(row)
    return bl, history
