"""Synthetic shifted-domain datasets, group-aware splits and CSV I/O."""
from __future__ import annotations

import csv
import io
import logging
import os
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

SOURCE = "s"
TARGET = "t"


class InfeasibleSplit(ValueError):
    pass


class CsvFormatError(ValueError):
    pass


@dataclass
class LabeledSet:
    features: np.ndarray
    labels: Optional[np.ndarray]
    domain: str
    groups: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be 2-D")
        n = self.features.shape[0]
        self.groups = np.asarray(self.groups, dtype=np.int64).reshape(-1)
        if self.groups.shape != (n,):
            raise ValueError("one group id per row required")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if self.labels.shape != (n,):
                raise ValueError("one label per row required")
            if n and self.labels.min() < 0:
                raise ValueError("labels must be non-negative")
        if self.domain not in (SOURCE, TARGET):
            raise ValueError(f"domain must be 's' or 't', got {self.domain!r}")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "LabeledSet":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledSet(
            self.features[idx],
            None if self.labels is None else self.labels[idx],
            self.domain,
            self.groups[idx],
        )

    def unlabeled(self) -> "LabeledSet":
        return LabeledSet(self.features, None, self.domain, self.groups)

    def __eq__(self, other):
        if not isinstance(other, LabeledSet):
            return NotImplemented
        if (self.labels is None) != (other.labels is None):
            return False
        return (
            self.domain == other.domain
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.groups, other.groups)
            and (self.labels is None or np.array_equal(self.labels, other.labels))
        )


class Generator(str, Enum):
    BLOBS = "blobs"
    MOONS = "moons"


@dataclass(frozen=True)
class ShiftSpec:
    generator: Generator = Generator.BLOBS
    n_classes: int = 4
    n_per_class: int = 100
    rotation_deg: float = 30.0
    translation: tuple = (0.0, 0.0)
    noise_sd: float = 1.0
    seed: int = 0
    radius: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "generator", Generator(self.generator))
        object.__setattr__(self, "translation", tuple(float(t) for t in self.translation))
        if self.generator is Generator.MOONS and self.n_classes != 2:
            raise ValueError("moons always has exactly 2 classes")
        if self.generator is Generator.BLOBS and self.n_classes < 2:
            raise ValueError("blobs needs at least 2 classes")
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be >= 1")
        if not self.noise_sd > 0:
            raise ValueError("noise_sd must be positive")
        if len(self.translation) != 2:
            raise ValueError("translation must be a 2-vector")


def blob_centers(n_classes: int, radius: float = 4.0) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(n_classes) / n_classes
    return radius * np.column_stack([np.cos(ang), np.sin(ang)])


def _draw(spec: ShiftSpec, rng: np.random.Generator):
    k, n = spec.n_classes, spec.n_per_class
    labels = np.repeat(np.arange(k), n)
    if spec.generator is Generator.BLOBS:
        x = blob_centers(k, spec.radius)[labels] + spec.noise_sd * rng.standard_normal((k * n, 2))
    else:
        t = rng.uniform(0.0, np.pi, size=k * n)
        upper = np.column_stack([np.cos(t), np.sin(t)])
        lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
        x = np.where((labels == 0)[:, None], upper, lower)
        x = x + spec.noise_sd * rng.standard_normal(x.shape)
    return x, labels


def _groups(n: int, rng: np.random.Generator) -> np.ndarray:
    """Consecutive runs of 2-4 rows share a group id."""
    sizes = []
    left = n
    while left > 0:
        s = int(rng.integers(2, 5))
        if left - s == 1:
            s += 1 if s < 4 else -1
        s = min(s, left)
        sizes.append(s)
        left -= s
    return np.repeat(np.arange(len(sizes)), sizes)


def rotate(x: np.ndarray, degrees: float) -> np.ndarray:
    th = np.deg2rad(degrees)
    r = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    return x @ r.T


def generate_shift_pair(spec: ShiftSpec):
    """Source draw plus an independently drawn, rotated-then-translated target."""
    seeds = np.random.SeedSequence(spec.seed).spawn(2)
    sets = []
    for domain, ss in zip((SOURCE, TARGET), seeds):
        rng = np.random.default_rng(ss)
        x, y = _draw(spec, rng)
        if domain == TARGET:
            x = rotate(x, spec.rotation_deg) + np.asarray(spec.translation)
        sets.append(LabeledSet(x, y, domain, _groups(len(y), rng)))
    return sets[0], sets[1]


@dataclass
class SplitPlan:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    group_respecting: bool = True

    def __post_init__(self):
        for name in ("train", "validation", "test"):
            setattr(self, name, np.sort(np.asarray(getattr(self, name), dtype=np.int64)))
        a, b, c = (set(self.train.tolist()), set(self.validation.tolist()), set(self.test.tolist()))
        if a & b or a & c or b & c:
            raise ValueError("split parts overlap")

    def sizes(self):
        return len(self.train), len(self.validation), len(self.test)


def split(ds: LabeledSet, fractions: Sequence[float] = (0.6, 0.2, 0.2),
          group_respecting: bool = True, seed: int = 0) -> SplitPlan:
    """Shuffle the groups (or rows) and fill train, validation, test in turn."""
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.shape != (3,) or np.any(fr <= 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise ValueError("fractions must be three positive numbers summing to 1")
    n = len(ds)
    rng = np.random.default_rng(seed)
    if group_respecting:
        uniq, inv = np.unique(ds.groups, return_inverse=True)
        units = [np.flatnonzero(inv == g) for g in range(len(uniq))]
    else:
        units = [np.array([i]) for i in range(n)]
    order = rng.permutation(len(units))
    targets = np.round(np.cumsum(fr) * n).astype(int)
    biggest = max((len(u) for u in units), default=0)
    if any(biggest > t for t in np.round(fr * n)):
        raise InfeasibleSplit(f"a group of {biggest} rows does not fit a split of fractions {tuple(fr)}")
    parts = [[], [], []]
    filled = 0
    k = 0
    for u in order:
        rows = units[u]
        while k < 2 and filled + len(rows) / 2.0 > targets[k]:
            k += 1
        parts[k].append(rows)
        filled += len(rows)
    out = [np.concatenate(p) if p else np.zeros(0, dtype=np.int64) for p in parts]
    if any(len(p) == 0 for p in out):
        raise InfeasibleSplit(f"could not populate every split, sizes {[len(p) for p in out]}")
    return SplitPlan(out[0], out[1], out[2], group_respecting)


def _fmt(v: float) -> str:
    return repr(float(v))


def to_csv_text(ds: LabeledSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    m = ds.n_features
    w.writerow([f"f{i}" for i in range(m)] + ["label", "domain", "group"])
    for i in range(len(ds)):
        label = "" if ds.labels is None else str(int(ds.labels[i]))
        w.writerow([_fmt(v) for v in ds.features[i]] + [label, ds.domain, str(int(ds.groups[i]))])
    return buf.getvalue()


def atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_csv(ds: LabeledSet, path) -> None:
    atomic_write(path, to_csv_text(ds))


def load_csv(path, domain: Optional[str] = None) -> LabeledSet:
    """Parse the ``f0..f{m-1},label,domain,group`` schema.

    A header-only file yields an empty set whose domain defaults to ``domain``
    (or source). Labels are ``None`` when every label cell is blank.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvFormatError(f"{path}: line 1: missing header")
    header = rows[0]
    if len(header) < 3 or header[-3:] != ["label", "domain", "group"]:
        raise CsvFormatError(f"{path}: line 1: header must end with label,domain,group")
    m = len(header) - 3
    if header[:m] != [f"f{i}" for i in range(m)]:
        raise CsvFormatError(f"{path}: line 1: feature columns must be named f0..f{m - 1}")
    feats, labels, groups, domains = [], [], [], set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != m + 3:
            raise CsvFormatError(f"{path}: line {lineno}: expected {m + 3} cells, got {len(row)}")
        try:
            feats.append([float(c) for c in row[:m]])
        except ValueError as exc:
            raise CsvFormatError(f"{path}: line {lineno}: non-numeric feature ({exc})") from None
        dom = row[m + 1]
        if dom not in (SOURCE, TARGET):
            raise CsvFormatError(f"{path}: line {lineno}: domain must be 's' or 't', got {dom!r}")
        domains.add(dom)
        lab = row[m].strip()
        if lab == "":
            if dom == SOURCE:
                raise CsvFormatError(f"{path}: line {lineno}: source rows need a label")
            labels.append(None)
        else:
            try:
                labels.append(int(lab))
            except ValueError:
                raise CsvFormatError(f"{path}: line {lineno}: non-integer label {lab!r}") from None
        try:
            g = int(row[m + 2])
        except ValueError:
            raise CsvFormatError(f"{path}: line {lineno}: non-integer group {row[m + 2]!r}") from None
        if g < 0:
            raise CsvFormatError(f"{path}: line {lineno}: group must be non-negative")
        groups.append(g)
    if len(domains) > 1:
        raise CsvFormatError(f"{path}: mixed domains in one file")
    dom = domains.pop() if domains else (domain or SOURCE)
    have = [l is not None for l in labels]
    if any(have) and not all(have):
        raise CsvFormatError(f"{path}: label column is partially blank")
    lab_arr = np.array(labels, dtype=np.int64) if labels and all(have) else None
    x = np.array(feats, dtype=np.float64).reshape(len(feats), m)
    return LabeledSet(x, lab_arr, dom, np.array(groups, dtype=np.int64))
