"""Command-line entry point: ``mvhe {synth,fit,eval,sweep,robustness,ablation}``.

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
Outputs are written atomically, so a failed run never leaves partial JSON.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import os
import sys
from contextlib import nullcontext
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .dataset import TRANSFORMS, SyntheticSpec, generate_synthetic, save_dataset, split_by_object
from .harness import (METHODS, ExperimentConfig, ExperimentError, ablation, cross_validate,
                      fit_method, preprocess_pair, resolve_params, robustness_sweep, run_experiment,
                      substream)

THREADS_ENV = "MVHE_THREADS"
PARAM_FLAGS = ("d", "lambda1", "lambda2", "p1", "p2", "beta", "kernel", "sigma", "reg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_atomic(path, text: str) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _dump(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _add_data(p):
    p.add_argument("--data", help="dataset manifest JSON")
    p.add_argument("--synthetic", help="synthetic spec JSON file (instead of --data)")


def _add_method(p):
    p.add_argument("--method", choices=METHODS, help="registered method")
    p.add_argument("--d", type=int, help="embedding dimension")
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--p1", type=int)
    p.add_argument("--p2", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--kernel", choices=("rbf", "linear"))
    p.add_argument("--sigma", type=float, help="rbf bandwidth (default: median pairwise distance)")
    p.add_argument("--reg", type=float, help="kernel regularization, relative to mean Gram diagonal")
    p.add_argument("--pca-dim", type=int, help="per-view PCA dimension (default: no PCA)")
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mvhe", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with option values; flags win on conflict")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--views", type=int, default=3)
    p.add_argument("--ambient-dim", type=int, default=20)
    p.add_argument("--latent-dim", type=int, default=4)
    p.add_argument("--transform", choices=TRANSFORMS, default="linear-random")
    p.add_argument("--separation", type=float, default=3.0)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    for name, text in (("fit", "fit a model on all objects and save it"),
                       ("eval", "train/test evaluation with cross-view 1-NN"),
                       ("sweep", "cross-validated hyperparameter search"),
                       ("robustness", "label-permutation robustness study"),
                       ("ablation", "MvHE with subsets of its three terms")):
        p = sub.add_parser(name, help=text)
        _add_data(p)
        _add_method(p)
        p.add_argument("--out", help="output JSON path")
        if name == "sweep":
            p.add_argument("--grid", help="JSON object mapping parameter names to lists of values")
            p.add_argument("--folds", type=int)
        if name == "robustness":
            p.add_argument("--fractions", help="comma-separated permutation fractions")
            p.add_argument("--csv", help="also write a flat CSV here")
    return parser


DEFAULTS = {"method": "mvhe", "train_fraction": 0.5, "repeats": 10, "seed": 0, "folds": 5,
            "fractions": "0,0.05,0.1,0.15,0.2"}


def _merged(args) -> dict:
    """Config-file values under explicit flags, then built-in defaults."""
    opts = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            opts.update(json.load(fh))
    for k, v in vars(args).items():
        if v is not None and k != "config":
            opts[k] = v
    for k, v in DEFAULTS.items():
        opts.setdefault(k, v)
    if opts["method"] not in METHODS:
        raise UsageError(f"unknown method {opts['method']!r}; registered: {', '.join(METHODS)}")
    return opts


def _experiment_config(opts) -> ExperimentConfig:
    data, synth = opts.get("data"), opts.get("synthetic")
    if (data is None) == (synth is None):
        raise UsageError("exactly one of --data or --synthetic is required")
    spec = None
    if synth is not None:
        if isinstance(synth, dict):
            spec = SyntheticSpec(**synth)
        else:
            with open(synth, encoding="utf-8") as fh:
                spec = SyntheticSpec(**json.load(fh))
    params = dict(opts.get("params") or {})
    params.update({k: opts[k] for k in PARAM_FLAGS if opts.get(k) is not None})
    try:
        params = resolve_params(opts["method"], params)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return ExperimentConfig(
        method=opts["method"], params=params, pca_dim=opts.get("pca_dim"),
        train_fraction=float(opts["train_fraction"]), seed=int(opts["seed"]),
        repeats=int(opts["repeats"]), manifest=data, synthetic=spec,
    )


def _require_out(opts):
    if not opts.get("out"):
        raise UsageError("--out is required")
    return opts["out"]


def cmd_synth(opts) -> None:
    spec = SyntheticSpec(classes=opts["classes"], objects_per_class=opts["per_class"],
                         views=opts["views"], ambient_dim=opts["ambient_dim"],
                         view_transform=opts["transform"], class_separation=opts["separation"],
                         noise_sigma=opts["noise"], seed=opts["seed"], latent_dim=opts["latent_dim"])
    manifest = save_dataset(generate_synthetic(spec), opts["out"])
    write_atomic(Path(opts["out"]) / "spec.json", _dump(asdict(spec)))
    print(manifest)


def cmd_fit(opts) -> None:
    out = _require_out(opts)
    cfg = _experiment_config(opts)
    try:
        data = cfg.load()
    except Exception as exc:
        raise ExperimentError("load", str(exc)) from exc
    try:
        train, _, pcas = preprocess_pair(data, data, cfg.pca_dim)
    except Exception as exc:
        raise ExperimentError("preprocess", str(exc)) from exc
    try:
        model = fit_method(cfg.method, train, cfg.params)
    except Exception as exc:
        raise ExperimentError("fit", str(exc)) from exc
    if hasattr(model, "models"):
        body = {f"{i}-{j}": mo.to_dict() for (i, j), mo in model.models.items()}
    else:
        body = model.to_dict()
    doc = {"config": cfg.resolved(), "pca": None if pcas is None else [p.to_dict() for p in pcas],
           "model": body}
    write_atomic(out, _dump(doc))


def cmd_eval(opts) -> None:
    out = _require_out(opts)
    report = run_experiment(_experiment_config(opts))
    write_atomic(out, _dump(report.to_dict()))


def _grid(spec) -> list:
    if spec is None:
        return [{}]
    if isinstance(spec, str):
        spec = json.loads(spec)
    if isinstance(spec, list):
        return spec
    keys = list(spec)
    return [dict(zip(keys, vals)) for vals in itertools.product(*(spec[k] for k in keys))]


def cmd_sweep(opts) -> None:
    out = _require_out(opts)
    cfg = _experiment_config(opts)
    data = cfg.load()
    train, _ = split_by_object(data, cfg.train_fraction, substream(cfg.seed, "split-0"))
    grid = [{**cfg.params, **point} for point in _grid(opts.get("grid"))]
    res = cross_validate(train, cfg.method, grid, folds=int(opts["folds"]), seed=cfg.seed,
                         pca_dim=cfg.pca_dim)
    doc = {"config": {**cfg.resolved(), "folds": opts["folds"]}, "grid": grid,
           "scores": res.scores, "fold_scores": res.fold_scores, "failures": res.failures,
           "best_params": res.best_params, "best_score": res.best_score}
    write_atomic(out, _dump(doc))


def flat_rows(reports) -> list:
    rows = []
    for rep in reports:
        for (g, p), acc in sorted(rep.pairwise_accuracy.items()):
            rows.append({"method": rep.method, "gallery": g, "probe": p,
                         "fraction": rep.permute_fraction, "accuracy": acc, "macc": rep.macc,
                         "relative_loss": rep.relative_loss})
    return rows


def cmd_robustness(opts) -> None:
    out = _require_out(opts)
    cfg = _experiment_config(opts)
    fractions = opts["fractions"]
    if isinstance(fractions, str):
        fractions = [float(f) for f in fractions.split(",") if f.strip()]
    reports = robustness_sweep(cfg, fractions)
    write_atomic(out, _dump({"config": cfg.resolved(), "reports": [r.to_dict() for r in reports]}))
    if opts.get("csv"):
        rows = flat_rows(reports)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else ["method"])
        writer.writeheader()
        writer.writerows(rows)
        write_atomic(opts["csv"], buf.getvalue())


def cmd_ablation(opts) -> None:
    out = _require_out(opts)
    opts = {**opts, "method": "mvhe"}
    cfg = _experiment_config(opts)
    reports = ablation(cfg)
    write_atomic(out, _dump({"config": cfg.resolved(),
                             "variants": {k: r.to_dict() for k, r in reports.items()}}))


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "eval": cmd_eval, "sweep": cmd_sweep,
            "robustness": cmd_robustness, "ablation": cmd_ablation}


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=int(value))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        opts = _merged(args) if args.command != "synth" else vars(args)
        with _thread_limit():
            COMMANDS[args.command](opts)
    except UsageError as exc:
        print(f"mvhe: usage error: {exc}", file=sys.stderr)
        return 2
    except ExperimentError as exc:
        print(f"mvhe: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"mvhe: error: [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
