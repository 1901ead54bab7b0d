"""JSON checkpoints for base learners and stacked models.

Floats are written with ``repr`` precision so a save/load round trip is exact
and two identical runs produce identical bytes.
"""
from __future__ import annotations

import dataclasses
import json
from enum import Enum

import numpy as np

from .adapt import BaseLearner, TrainConfig
from .discrepancy import DiscrepancyMethod
from .lowrank import AlmConfig
from .nn import Dense, Mlp, SgdConfig
from .stack import StackedModel

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def mlp_to_dict(net: Mlp) -> dict:
    return {
        "architecture": net.architecture,
        "params": [p.ravel().tolist() for p in net.params()],
    }


def mlp_from_dict(d: dict) -> Mlp:
    arch, flat = d["architecture"], d["params"]
    if len(flat) != 2 * len(arch):
        raise CheckpointError("parameter list does not match architecture")
    layers = []
    for i, (n_in, n_out, act) in enumerate(arch):
        w = np.asarray(flat[2 * i], dtype=np.float64)
        b = np.asarray(flat[2 * i + 1], dtype=np.float64)
        if w.size != n_in * n_out or b.size != n_out:
            raise CheckpointError(f"layer {i}: parameter sizes do not match {n_in}x{n_out}")
        layers.append(Dense(w.reshape(n_in, n_out), b, act))
    return Mlp(layers)


def method_to_dict(m: DiscrepancyMethod) -> dict:
    return _plain(m)


def method_from_dict(d: dict) -> DiscrepancyMethod:
    alm = AlmConfig(**d["alm"]) if d.get("alm") else None
    bws = tuple(d["bandwidths"]) if d.get("bandwidths") is not None else None
    return DiscrepancyMethod(d["tag"], bws, tuple(d["bandwidth_scales"]), alm)


def base_to_dict(bl: BaseLearner, train_config: TrainConfig | None = None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "base",
        "method": method_to_dict(bl.method),
        "n_classes": bl.n_classes,
        "g": mlp_to_dict(bl.g),
        "substructures": [mlp_to_dict(s) for s in bl.substructures],
        "f": mlp_to_dict(bl.f),
        "train_config": _plain(train_config) if train_config is not None else None,
        "seed": train_config.sgd.seed if train_config is not None else None,
    }


def base_from_dict(d: dict) -> BaseLearner:
    _check(d, "base")
    return BaseLearner(
        mlp_from_dict(d["g"]),
        [mlp_from_dict(s) for s in d["substructures"]],
        mlp_from_dict(d["f"]),
        method_from_dict(d["method"]),
        int(d["n_classes"]),
    )


def stack_to_dict(m: StackedModel, config=None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "stack",
        "n_classes": m.n_classes,
        "bases": [base_to_dict(b) for b in m.bases],
        "meta": mlp_to_dict(m.meta),
        "config": _plain(config) if config is not None else None,
    }


def stack_from_dict(d: dict) -> StackedModel:
    _check(d, "stack")
    return StackedModel([base_from_dict(b) for b in d["bases"]], mlp_from_dict(d["meta"]), int(d["n_classes"]))


def _check(d: dict, kind: str) -> None:
    if d.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format_version {d.get('format_version')!r}")
    if d.get("kind") != kind:
        raise CheckpointError(f"expected a {kind} checkpoint, got {d.get('kind')!r}")


def dumps(d: dict) -> str:
    return json.dumps(d, indent=1, sort_keys=True, allow_nan=False) + "\n"


def load(path):
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    kind = d.get("kind")
    if kind == "base":
        return base_from_dict(d)
    if kind == "stack":
        return stack_from_dict(d)
    raise CheckpointError(f"{path}: unknown checkpoint kind {kind!r}")
