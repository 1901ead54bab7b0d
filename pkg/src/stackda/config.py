"""INI experiment configuration and its resolution into typed configs.

Example::

    [run]
    seed = 0
    out = runs/demo

    [data]
    generator = blobs        ; or give source/target CSV paths instead
    classes = 4
    per_class = 100
    rotate = 45
    translate = 0,0
    noise = 1.0

    [split]
    fractions = 0.6,0.2,0.2
    group_respecting = true
    validation = target

    [train]                  ; shared by every base
    epochs = 30
    lambda = 1.0
    warmup = 3

    [train.cmmd]             ; per-method overrides
    lambda = 0.1

    [kernel]
    scales = 0.25,0.5,1,2,4

    [lowrank]
    lambda_e = 1.0

    [stack]
    bases = cmmd,lowrank,coral

    [meta]
    epochs = 30

Command-line flags override file values, which override the defaults below.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from typing import Optional

from .adapt import TrainConfig
from .discrepancy import DEFAULT_BANDWIDTH_SCALES, DiscrepancyMethod, Method
from .lowrank import AlmConfig
from .nn import SgdConfig
from .stack import BASE_ORDER, StackConfig

# method-specific defaults layered under [train.<method>]
METHOD_DEFAULTS = {"cmmd": {"lambda": "0.1"}}


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


@dataclass
class ExperimentConfig:
    parser: configparser.ConfigParser
    path: Optional[str] = None
    overrides: dict = field(default_factory=dict)

    def get(self, section: str, key: str, default=None):
        if (section, key) in self.overrides and self.overrides[(section, key)] is not None:
            return str(self.overrides[(section, key)])
        if self.parser.has_option(section, key):
            return self.parser.get(section, key)
        return default

    def getfloat(self, section, key, default):
        v = self.get(section, key)
        try:
            return float(v) if v not in (None, "") else default
        except ValueError:
            raise ConfigError(f"[{section}] {key}: not a number: {v!r}") from None

    def getint(self, section, key, default):
        v = self.get(section, key)
        try:
            return int(v) if v not in (None, "") else default
        except ValueError:
            raise ConfigError(f"[{section}] {key}: not an integer: {v!r}") from None

    def getbool(self, section, key, default):
        v = self.get(section, key)
        if v in (None, ""):
            return default
        low = v.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{section}] {key}: not a boolean: {v!r}")

    @property
    def seed(self) -> int:
        return self.getint("run", "seed", 0)

    @property
    def out_dir(self) -> str:
        return self.get("run", "out", "out")

    def method(self, name: str) -> DiscrepancyMethod:
        try:
            tag = Method(name)
        except ValueError:
            raise ConfigError(f"unknown method {name!r}; choose from {[m.value for m in Method]}") from None
        scales = _floats(self.get("kernel", "scales", "")) or DEFAULT_BANDWIDTH_SCALES
        bws = _floats(self.get("kernel", "bandwidths", "")) or None
        alm = None
        if tag is Method.LOWRANK:
            d = AlmConfig()
            alm = AlmConfig(
                lambda_e=self.getfloat("lowrank", "lambda_e", d.lambda_e),
                mu0=self.getfloat("lowrank", "mu0", d.mu0),
                rho=self.getfloat("lowrank", "rho", d.rho),
                mu_max=self.getfloat("lowrank", "mu_max", d.mu_max),
                tol=self.getfloat("lowrank", "tol", d.tol),
                max_iters=self.getint("lowrank", "max_iters", d.max_iters),
            )
        return DiscrepancyMethod(tag, bws, scales, alm)

    def _train_value(self, method: str, key: str, cast, default):
        sec = f"train.{method}"
        flag = self.overrides.get(("train", key))
        if flag is not None:
            return cast(flag)
        if self.parser.has_option(sec, key):
            return cast(self.parser.get(sec, key))
        if self.parser.has_option("train", key):
            return cast(self.parser.get("train", key))
        if key in METHOD_DEFAULTS.get(method, {}):
            return cast(METHOD_DEFAULTS[method][key])
        return default

    def train_config(self, method: str) -> TrainConfig:
        d = SgdConfig()
        try:
            tv = lambda k, cast, dflt: self._train_value(method, k, cast, dflt)  # noqa: E731
            sgd = SgdConfig(
                eta0=tv("eta0", float, d.eta0), alpha=tv("alpha", float, d.alpha),
                beta=tv("beta", float, d.beta), momentum=tv("momentum", float, d.momentum),
                batch_size=tv("batch_size", int, d.batch_size), epochs=tv("epochs", int, d.epochs),
                seed=self.seed,
            )
            warm = min(tv("warmup", int, 3), sgd.epochs)
            return TrainConfig(sgd=sgd, lambda_tradeoff=tv("lambda", float, 1.0), warmup_epochs=warm,
                               pseudo_refresh=tv("pseudo_refresh", lambda v: str(v).lower() in ("1", "true", "yes", "on"), True))
        except ValueError as exc:
            raise ConfigError(f"[train] {exc}") from None

    def base_methods(self) -> list:
        names = [n.strip() for n in self.get("stack", "bases", ",".join(m.value for m in BASE_ORDER)).split(",")]
        if len(names) != 3:
            raise ConfigError("[stack] bases must list exactly three methods")
        return names

    def stack_config(self) -> StackConfig:
        names = self.base_methods()
        d = SgdConfig()
        try:
            meta = SgdConfig(
                eta0=self.getfloat("meta", "eta0", d.eta0), alpha=self.getfloat("meta", "alpha", d.alpha),
                beta=self.getfloat("meta", "beta", d.beta), momentum=self.getfloat("meta", "momentum", d.momentum),
                batch_size=self.getint("meta", "batch_size", d.batch_size),
                epochs=self.getint("meta", "epochs", d.epochs), seed=self.seed,
            )
            return StackConfig(
                bases=tuple(self.train_config(n) for n in names),
                base_methods=tuple(self.method(n) for n in names),
                meta_sgd=meta,
                validation_domain=self.get("split", "validation", "source"),
                seed=self.seed,
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def resolved(self) -> dict:
        """Flat, sorted echo of every value that affects results (no output paths)."""
        out = {}
        for sec in self.parser.sections():
            for k, v in self.parser.items(sec):
                out[f"{sec}.{k}"] = v
        for (sec, k), v in self.overrides.items():
            if v is not None:
                out[f"{sec}.{k}"] = str(v)
        out.pop("run.out", None)
        return dict(sorted(out.items()))


def load_config(path: Optional[str], overrides: Optional[dict] = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return ExperimentConfig(parser, path, dict(overrides or {}))
