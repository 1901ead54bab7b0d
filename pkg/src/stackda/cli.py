"""Command-line runner: generate, train, stack, ablate, eval.

Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import warnings

import numpy as np

from . import checkpoint
from .adapt import TrainingDiverged, train_base
from .config import ConfigError, ExperimentConfig, load_config
from .data import (CsvFormatError, InfeasibleSplit, LabeledSet, ShiftSpec, atomic_write,
                   generate_shift_pair, load_csv, save_csv, split)
from .discrepancy import NoOverlappingClass
from .linalg import NumericFailure
from .seeds import derive_seed
from .stack import BaseTrainingError, ProtocolError, StackedModel, base_name, evaluate, fit_stack, seeded_base

log = logging.getLogger("stackda")

DEFAULT_ROTATION = 30.0
HISTORY_HEADER = ["epoch", "class_loss", "adapt_loss", "lr", "source_acc", "target_acc"]
METRICS_HEADER = ["name", "split", "accuracy", "seed"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def history_csv(history) -> str:
    return _csv_text(HISTORY_HEADER, [[_num(r[k]) for k in HISTORY_HEADER] for r in history])


def confusion_csv(conf) -> str:
    return _csv_text(None, [[str(int(v)) for v in row] for row in conf])


# ---------------------------------------------------------------- data setup

def _spec_from_config(cfg: ExperimentConfig) -> ShiftSpec:
    gen = cfg.get("data", "generator", "blobs")
    classes = 2 if gen == "moons" else cfg.getint("data", "classes", 4)
    try:
        return ShiftSpec(
            generator=gen, n_classes=classes,
            n_per_class=cfg.getint("data", "per_class", 100),
            rotation_deg=cfg.getfloat("data", "rotate", DEFAULT_ROTATION),
            translation=tuple(float(v) for v in cfg.get("data", "translate", "0,0").split(",")),
            noise_sd=cfg.getfloat("data", "noise", 1.0 if gen == "blobs" else 0.1),
            seed=derive_seed(cfg.seed, "data"),
        )
    except ValueError as exc:
        raise ConfigError(f"[data] {exc}") from None


def load_domains(cfg: ExperimentConfig):
    src, tgt = cfg.get("data", "source"), cfg.get("data", "target")
    if src or tgt:
        if not (src and tgt):
            raise ConfigError("[data] needs both source and target paths")
        for p in (src, tgt):
            if not os.path.isfile(p):
                raise ConfigError(f"data file not found: {p}")
        return load_csv(src, "s"), load_csv(tgt, "t")
    return generate_shift_pair(_spec_from_config(cfg))


def make_plans(cfg: ExperimentConfig, source: LabeledSet, target: LabeledSet):
    fr = tuple(float(v) for v in cfg.get("split", "fractions", "0.6,0.2,0.2").split(","))
    grp = cfg.getbool("split", "group_respecting", True)
    ps = split(source, fr, grp, derive_seed(cfg.seed, "split/source"))
    pt = split(target, fr, grp, derive_seed(cfg.seed, "split/target"))
    return ps, pt


def n_classes_of(source: LabeledSet, target: LabeledSet) -> int:
    c = int(source.labels.max()) + 1
    if target.labels is not None and len(target):
        c = max(c, int(target.labels.max()) + 1)
    return c


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    gen = "moons" if args.moons else "blobs"
    spec = ShiftSpec(
        generator=gen, n_classes=2 if gen == "moons" else args.classes,
        n_per_class=args.per_class, rotation_deg=args.rotate,
        translation=tuple(args.translate), noise_sd=args.noise if args.noise is not None else (1.0 if gen == "blobs" else 0.1),
        seed=derive_seed(args.seed, "data"),
    )
    source, target = generate_shift_pair(spec)
    os.makedirs(args.out, exist_ok=True)
    save_csv(source, os.path.join(args.out, "source.csv"))
    save_csv(target, os.path.join(args.out, "target.csv"))
    print(f"wrote {len(source)} source and {len(target)} target rows to {args.out}")
    return 0


def train_one(cfg: ExperimentConfig, method: str, source, target, ps, pt):
    """Train a single base exactly as it is trained inside a stack."""
    c = n_classes_of(source, target)
    tcfg = cfg.train_config(method)
    bl, tcfg = seeded_base(cfg.method(method), tcfg, source.n_features, c, cfg.seed)
    trained, hist = train_base(bl, source.subset(ps.train), target.subset(pt.train), tcfg)
    return trained, hist, tcfg


def cmd_train(args) -> int:
    cfg = load_config(args.config, {("train", "lambda"): args.lam, ("train", "epochs"): args.epochs,
                                    ("run", "seed"): args.seed, ("run", "out"): args.out})
    source, target = load_domains(cfg)
    ps, pt = make_plans(cfg, source, target)
    method = args.method
    trained, hist, tcfg = train_one(cfg, method, source, target, ps, pt)
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    doc = checkpoint.base_to_dict(trained, tcfg)
    doc["config"] = cfg.resolved()
    atomic_write(os.path.join(out, f"base_{method}.json"), checkpoint.dumps(doc))
    atomic_write(os.path.join(out, f"history_{method}.csv"), history_csv(hist))
    rows = []
    if target.labels is not None:
        acc, conf = evaluate(trained, target.subset(pt.test))
        rows.append([method, "target_test", _num(acc), str(cfg.seed)])
        atomic_write(os.path.join(out, f"confusion_{method}.csv"), confusion_csv(conf))
        print(f"{method}: target test accuracy {acc:.4f}")
    acc_s, _ = evaluate(trained, source.subset(ps.test))
    rows.append([method, "source_test", _num(acc_s), str(cfg.seed)])
    atomic_write(os.path.join(out, f"metrics_{method}.csv"), _csv_text(METRICS_HEADER, rows))
    return 0


def run_stack(cfg: ExperimentConfig):
    source, target = load_domains(cfg)
    if target.labels is None:
        raise ConfigError("stack evaluation needs labeled target data for the test split")
    ps, pt = make_plans(cfg, source, target)
    scfg = cfg.stack_config()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = fit_stack(source, target, ps, scfg, target_plan=pt, n_classes=n_classes_of(source, target))
    test = target.subset(pt.test)
    names = [base_name(m) for m in scfg.base_methods]
    results = [(n, *evaluate(b, test)) for n, b in zip(names, model.bases)]
    results.append(("stack", *evaluate(model, test)))
    return model, scfg, results


def curves_csv(model: StackedModel) -> str:
    rows = []
    for name, hist in model.history["bases"].items():
        for r in hist:
            rows.append([str(r["epoch"]), name, "validation", _num(r.get("monitor_acc"))])
    for r in model.history["meta"]:
        rows.append([str(r["epoch"]), "stack", "validation", _num(r.get("monitor_acc"))])
    return _csv_text(["epoch", "name", "split", "accuracy"], rows)


def cmd_stack(args) -> int:
    cfg = load_config(args.config, {("run", "seed"): args.seed, ("run", "out"): args.out,
                                    ("train", "epochs"): args.epochs})
    model, scfg, results = run_stack(cfg)
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    doc = checkpoint.stack_to_dict(model, scfg)
    doc["experiment"] = cfg.resolved()
    atomic_write(os.path.join(out, "stack.json"), checkpoint.dumps(doc))
    rows = [[n, "target_test", _num(acc), str(cfg.seed)] for n, acc, _ in results]
    atomic_write(os.path.join(out, "metrics.csv"), _csv_text(METRICS_HEADER, rows))
    atomic_write(os.path.join(out, "confusion.csv"), confusion_csv(results[-1][2]))
    atomic_write(os.path.join(out, "curves.csv"), curves_csv(model))
    for n, acc, _ in results:
        print(f"{n:>8}: {acc:.4f}")
    return 0


def cmd_ablate(args) -> int:
    cfg = load_config(args.config, {("run", "seed"): args.seed, ("run", "out"): args.out,
                                    ("train", "epochs"): args.epochs})
    _, _, results = run_stack(cfg)
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    rows = [[n, _num(acc), str(cfg.seed)] for n, acc, _ in results]
    atomic_write(os.path.join(out, "ablation.csv"), _csv_text(["name", "test_accuracy", "seed"], rows))
    for n, acc, _ in results:
        print(f"{n:>8}: {acc:.4f}")
    return 0


def cmd_eval(args) -> int:
    for p in (args.checkpoint, args.data):
        if not os.path.isfile(p):
            raise ConfigError(f"file not found: {p}")
    model = checkpoint.load(args.checkpoint)
    ds = load_csv(args.data)
    acc, conf = evaluate(model, ds)
    print(f"accuracy {acc:.4f} on {len(ds)} rows")
    if args.confusion:
        atomic_write(args.confusion, confusion_csv(conf))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stackda", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic source/target CSV pair")
    kind = g.add_mutually_exclusive_group()
    kind.add_argument("--blobs", action="store_true", help="gaussian blobs on a circle (default)")
    kind.add_argument("--moons", action="store_true", help="two interleaved half circles")
    g.add_argument("--classes", type=int, default=4)
    g.add_argument("--per-class", type=int, default=100)
    g.add_argument("--rotate", type=float, default=DEFAULT_ROTATION, help="target rotation in degrees")
    g.add_argument("--translate", type=float, nargs=2, default=(0.0, 0.0), metavar=("DX", "DY"))
    g.add_argument("--noise", type=float, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=".")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train one adapted base learner")
    t.add_argument("config")
    t.add_argument("--method", required=True, choices=["mmd", "cmmd", "lowrank", "coral"])
    t.add_argument("--lambda", dest="lam", type=float, default=None)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_train)

    for name, fn, help_ in (("stack", cmd_stack, "train bases and the meta learner"),
                            ("ablate", cmd_ablate, "accuracy of each base alone and of the stack")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config")
        s.add_argument("--epochs", type=int, default=None)
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--out", default=None)
        s.set_defaults(func=fn)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a labeled CSV")
    e.add_argument("checkpoint")
    e.add_argument("data")
    e.add_argument("--confusion", default=None, help="write the confusion matrix CSV here")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"numeric failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return 2
    except BaseTrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        cause = exc.cause
        if isinstance(cause, TrainingDiverged):
            print(f"diagnostics: {cause.diagnostics}", file=sys.stderr)
        return 2 if isinstance(cause, (TrainingDiverged, NumericFailure)) else 1
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, CsvFormatError, InfeasibleSplit, ProtocolError, NoOverlappingClass,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
