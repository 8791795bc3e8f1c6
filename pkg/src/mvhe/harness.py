"""Evaluation protocol: split, PCA, fit, project, cross-view 1-NN, mACC.

Every experiment is a pure function of its configuration and seed. The seed
feeds named substreams (``split``, ``cv``, ``permute``) so that changing one
stage's randomness never perturbs another.
"""

from __future__ import annotations

import itertools
import logging
import time
import zlib
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from . import baselines
from .dataset import MultiViewDataset, SyntheticSpec, generate_synthetic, load_dataset, \
    permute_pair_labels, split_by_object
from .embedding import HyperParams, KernelSpec, fit_kmvhe, fit_mvhe, median_sigma
from .preprocess import fit_view_pcas, pca_transform

logger = logging.getLogger(__name__)

METHODS = ("mvhe", "kmvhe", "cca", "kcca", "mcca", "pls", "mvda", "mvmda")
TWO_VIEW = ("cca", "kcca", "pls")
CLASS_DEPENDENT = ("mvhe", "kmvhe", "mvda", "mvmda")

DEFAULT_PARAMS = {
    "mvhe": {"lambda1": 1e-2, "lambda2": 5e-2, "p1": 1, "p2": 15, "beta": 0.1, "d": 10},
    "kmvhe": {"lambda1": 5e-3, "lambda2": 1e-3, "p1": 3, "p2": 15, "beta": 1.1, "d": 10,
              "kernel": "rbf", "sigma": None, "reg": 1e-8},
    "cca": {"d": 10},
    "kcca": {"d": 10, "kernel": "rbf", "sigma": None, "reg": 1e-3},
    "mcca": {"d": 10},
    "pls": {"d": 10},
    "mvda": {"d": 10},
    "mvmda": {"d": 10},
}


class ExperimentError(RuntimeError):
    """A failure inside one phase of an experiment; ``phase`` names it."""

    def __init__(self, phase: str, message: str):
        super().__init__(f"[{phase}] {message}")
        self.phase = phase


def substream(seed: int, name: str) -> int:
    """Independent integer seed for the named stage."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


# ---------------------------------------------------------------------------
# 1-NN evaluation


def cross_view_accuracy(gallery_emb, gallery_labels, probe_emb, probe_labels) -> float:
    """Fraction of probe columns whose nearest gallery column has the same label.

    Euclidean distance; ties go to the lowest gallery index.
    """
    G = np.asarray(gallery_emb, dtype=float)
    P = np.asarray(probe_emb, dtype=float)
    if G.ndim != 2 or G.shape[1] == 0:
        raise ValueError("empty gallery")
    if P.shape[0] != G.shape[0]:
        raise ValueError(f"embedding dimensions differ: {G.shape[0]} vs {P.shape[0]}")
    if P.shape[1] == 0:
        raise ValueError("empty probe set")
    dist = cdist(P.T, G.T, "sqeuclidean")
    nearest = np.argmin(dist, axis=1)
    return float(np.mean(np.asarray(gallery_labels)[nearest] == np.asarray(probe_labels)))


def mean_accuracy(pairwise: dict) -> float:
    if not pairwise:
        raise ValueError("no pairwise accuracies")
    return float(np.mean(list(pairwise.values())))


# ---------------------------------------------------------------------------
# method registry


@dataclass(frozen=True)
class PairwiseModel:
    """Two-view methods applied to every unordered pair of views."""

    models: dict
    method: str

    def pair_embeddings(self, views, g: int, p: int):
        i, j = (g, p) if g < p else (p, g)
        model = self.models[(i, j)]
        a = 0 if g == i else 1
        return model.transform(a, views[g]), model.transform(1 - a, views[p])


def resolve_params(method: str, params: Optional[dict] = None) -> dict:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; registered: {', '.join(METHODS)}")
    merged = dict(DEFAULT_PARAMS[method])
    for k, v in (params or {}).items():
        if k not in merged and not (method in ("mvhe", "kmvhe") and k in ("paired_weight", "include_paired")):
            raise ValueError(f"parameter {k!r} not accepted by {method}")
        merged[k] = v
    return merged


def _hyper(params: dict) -> HyperParams:
    keys = HyperParams.__dataclass_fields__
    return HyperParams(**{k: params[k] for k in keys if k in params})


def _kernel(params: dict, train: MultiViewDataset) -> KernelSpec:
    kind = params.get("kernel", "rbf")
    sigma = params.get("sigma")
    if kind == "rbf" and sigma is None:
        sigma = median_sigma(train.views)
    return KernelSpec(kind=kind, sigma=1.0 if sigma is None else float(sigma))


def fit_method(method: str, train: MultiViewDataset, params: Optional[dict] = None):
    """Fit a registered method on (already preprocessed) training data."""
    p = resolve_params(method, params)
    d = int(p["d"])
    if method == "mvhe":
        return fit_mvhe(train, _hyper(p), include_paired=bool(p.get("include_paired", False)))
    if method == "kmvhe":
        return fit_kmvhe(train, _hyper(p), _kernel(p, train), reg=float(p["reg"]),
                         include_paired=bool(p.get("include_paired", False)))
    if method == "mcca":
        return baselines.fit_mcca(train.views, d)
    if method == "mvda":
        return baselines.fit_mvda(train, d)
    if method == "mvmda":
        return baselines.fit_mvmda(train, d)
    models = {}
    for i, j in itertools.combinations(range(train.n), 2):
        X1, X2 = train.views[i], train.views[j]
        if method == "cca":
            models[(i, j)] = baselines.fit_cca(X1, X2, d)
        elif method == "pls":
            models[(i, j)] = baselines.fit_pls(X1, X2, d)
        else:
            models[(i, j)] = baselines.fit_kcca(X1, X2, _kernel(p, train), d, reg=float(p["reg"]))
    return PairwiseModel(models, method)


def pairwise_accuracies(model, test: MultiViewDataset) -> dict:
    """Accuracy for every ordered (gallery view, probe view) pair, g != p."""
    out = {}
    if isinstance(model, PairwiseModel):
        for g in range(test.n):
            for p in range(test.n):
                if g != p:
                    G, P = model.pair_embeddings(test.views, g, p)
                    out[(g, p)] = cross_view_accuracy(G, test.labels, P, test.labels)
        return out
    emb = [model.transform(v, test.views[v]) for v in range(test.n)]
    for g in range(test.n):
        for p in range(test.n):
            if g != p:
                out[(g, p)] = cross_view_accuracy(emb[g], test.labels, emb[p], test.labels)
    return out


def preprocess_pair(train: MultiViewDataset, test: MultiViewDataset, pca_dim: Optional[int]):
    """Fit per-view PCA on ``train`` and apply it to both sets."""
    if pca_dim is None:
        return train, test, None
    models = fit_view_pcas(train.views, pca_dim)
    tr = train.with_views([pca_transform(mo, X) for mo, X in zip(models, train.views)])
    te = test.with_views([pca_transform(mo, X) for mo, X in zip(models, test.views)])
    return tr, te, models


def _model_diagnostics(model) -> dict:
    if isinstance(model, PairwiseModel):
        return {"pairs": {f"{i}-{j}": _model_diagnostics(mo) for (i, j), mo in model.models.items()}}
    diag = dict(getattr(model, "diagnostics", {}) or {})
    eps = getattr(model, "regularization_epsilon", None)
    if eps is not None:
        diag["regularization_epsilon"] = eps
    if isinstance(model.params, dict) and "regularization" in model.params:
        diag["regularization"] = model.params["regularization"]
    kernel = getattr(model, "kernel", None)
    if kernel is not None:
        diag["kernel"] = asdict(kernel)
    return diag


# ---------------------------------------------------------------------------
# experiments


@dataclass
class ExperimentConfig:
    """One evaluation run.

    Exactly one of ``dataset``, ``manifest`` or ``synthetic`` supplies data.
    ``repeats`` random identity-disjoint splits are averaged.
    """

    method: str = "mvhe"
    params: dict = field(default_factory=dict)
    pca_dim: Optional[int] = None
    train_fraction: float = 0.5
    seed: int = 0
    repeats: int = 1
    permute_fraction: float = 0.0
    manifest: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None
    dataset: Optional[MultiViewDataset] = field(default=None, repr=False)

    def load(self) -> MultiViewDataset:
        sources = [s is not None for s in (self.dataset, self.manifest, self.synthetic)]
        if sum(sources) != 1:
            raise ValueError("exactly one data source (dataset, manifest or synthetic) is required")
        if self.dataset is not None:
            return self.dataset
        if self.manifest is not None:
            return load_dataset(self.manifest)
        return generate_synthetic(self.synthetic)

    def resolved(self) -> dict:
        doc = {
            "method": self.method,
            "params": resolve_params(self.method, self.params),
            "pca_dim": self.pca_dim,
            "train_fraction": self.train_fraction,
            "seed": self.seed,
            "repeats": self.repeats,
            "permute_fraction": self.permute_fraction,
        }
        if self.manifest is not None:
            doc["manifest"] = str(self.manifest)
        if self.synthetic is not None:
            doc["synthetic"] = asdict(self.synthetic)
        return doc


@dataclass
class ExperimentReport:
    method: str
    hyperparameters: dict
    pairwise_accuracy: dict
    macc: float
    timings: dict
    seed: int
    diagnostics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    permute_fraction: float = 0.0
    relative_loss: Optional[float] = None

    def to_dict(self, timings: bool = True) -> dict:
        doc = {
            "method": self.method,
            "hyperparameters": self.hyperparameters,
            "pairwise_accuracy": {f"{g}->{p}": acc for (g, p), acc in sorted(self.pairwise_accuracy.items())},
            "macc": self.macc,
            "seed": self.seed,
            "permute_fraction": self.permute_fraction,
            "relative_loss": self.relative_loss,
            "diagnostics": self.diagnostics,
            "config": self.config,
        }
        if timings:
            doc["timings"] = self.timings
        return doc


def _phase(name, timings, fn, *args, **kwargs):
    start = time.perf_counter()
    try:
        return fn(*args, **kwargs)
    except ExperimentError:
        raise
    except Exception as exc:
        raise ExperimentError(name, f"{type(exc).__name__}: {exc}") from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - start


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Split by object, fit PCA on train, fit the method, evaluate all view pairs."""
    timings: dict = {}
    params = _phase("config", timings, resolve_params, config.method, config.params)
    data = _phase("load", timings, config.load)
    sums: dict = {}
    per_repeat = []
    diagnostics: dict = {}
    for r in range(config.repeats):
        split_seed = substream(config.seed, f"split-{r}")
        train, test = _phase("split", timings, split_by_object, data, config.train_fraction, split_seed)
        if set(train.object_ids) & set(test.object_ids):
            raise ExperimentError("split", "train and test objects overlap")
        if config.permute_fraction > 0:
            train = _phase("permute", timings, permute_pair_labels, train, config.permute_fraction,
                           substream(config.seed, f"permute-{r}"))
        train_p, test_p, _ = _phase("preprocess", timings, preprocess_pair, train, test, config.pca_dim)
        model = _phase("fit", timings, fit_method, config.method, train_p, params)
        pairwise = _phase("evaluate", timings, pairwise_accuracies, model, test_p)
        for key, acc in pairwise.items():
            sums[key] = sums.get(key, 0.0) + acc
        per_repeat.append(mean_accuracy(pairwise))
        if r == 0:
            diagnostics = _model_diagnostics(model)
            diagnostics["train_objects"] = int(train.m)
            diagnostics["test_objects"] = int(test.m)
    pairwise = {k: v / config.repeats for k, v in sums.items()}
    diagnostics["repeat_macc"] = per_repeat
    return ExperimentReport(
        method=config.method,
        hyperparameters=params,
        pairwise_accuracy=pairwise,
        macc=mean_accuracy(pairwise),
        timings=timings,
        seed=config.seed,
        diagnostics=diagnostics,
        config=config.resolved(),
        permute_fraction=config.permute_fraction,
    )


def relative_loss(baseline_macc: float, macc: float) -> float:
    """Accuracy drop relative to the clean run; 0 when the baseline is 0."""
    if baseline_macc <= 0:
        return 0.0
    return (baseline_macc - macc) / baseline_macc


def robustness_sweep(config: ExperimentConfig, fractions) -> list:
    """One report per label-permutation fraction of the training set.

    Test labels are never touched. ``relative_loss`` is measured against the
    unpermuted run with the same splits.
    """
    fractions = [float(f) for f in fractions]
    if any(not 0.0 <= f <= 1.0 for f in fractions):
        raise ValueError("fractions must lie in [0, 1]")
    clean = run_experiment(replace(config, permute_fraction=0.0))
    reports = []
    for f in fractions:
        rep = clean if f == 0.0 else run_experiment(replace(config, permute_fraction=f))
        rep = replace(rep, relative_loss=relative_loss(clean.macc, rep.macc))
        reports.append(rep)
    return reports


ABLATION_VARIANTS = {
    "le_paired": (True, False, False),
    "lde_intra": (False, True, False),
    "lde_inter": (False, False, True),
    "le_paired+lde_intra": (True, True, False),
    "le_paired+lde_inter": (True, False, True),
    "lde_intra+lde_inter": (False, True, True),
    "mvhe": (True, True, True),
}


def ablation_params(base: dict, variant: str) -> dict:
    """Switch the three MvHE terms on or off; switched-on terms keep their weights."""
    paired, intra, inter = ABLATION_VARIANTS[variant]
    p = resolve_params("mvhe", base)
    p["paired_weight"] = 1.0 if paired else 0.0
    p["lambda1"] = p["lambda1"] if intra else 0.0
    p["lambda2"] = p["lambda2"] if inter else 0.0
    if not paired and not (intra and inter):
        # a single term is scale-free; give it unit weight
        if intra:
            p["lambda1"] = 1.0
        if inter:
            p["lambda2"] = 1.0
    return p


def ablation(config: ExperimentConfig, variants=None) -> dict:
    """MvHE with each subset of its three terms; returns ``{variant: report}``."""
    out = {}
    for name in variants or ABLATION_VARIANTS:
        cfg = replace(config, method="mvhe", params=ablation_params(config.params, name))
        out[name] = run_experiment(cfg)
    return out


# ---------------------------------------------------------------------------
# cross validation


@dataclass
class CVResult:
    best_params: dict
    best_score: float
    scores: list
    fold_scores: list
    failures: list


def _fold_indices(m: int, folds: int, seed: int) -> list:
    perm = np.random.default_rng(seed).permutation(m)
    return [np.sort(f) for f in np.array_split(perm, folds)]


def cross_validate(train: MultiViewDataset, method: str, grid, folds: int = 5, seed: int = 0,
                   pca_dim: Optional[int] = None) -> CVResult:
    """Pick the grid point with the best mean held-out mACC.

    Folds partition objects, so all views of an object land in the same
    fold. A grid point whose fit fails on a fold scores 0 there and the
    failure is recorded. Ties keep the earliest grid point.
    """
    grid = [dict(g) for g in grid]
    if not grid:
        raise ValueError("empty parameter grid")
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if folds > train.m:
        raise ValueError(f"fold too small: {folds} folds for {train.m} objects")
    parts = _fold_indices(train.m, folds, substream(seed, "cv"))
    all_idx = np.arange(train.m)
    splits = []
    for f, held in enumerate(parts):
        fit_idx = np.setdiff1d(all_idx, held)
        if method in CLASS_DEPENDENT and np.unique(train.labels[fit_idx]).size < 2:
            raise ValueError(f"fold too small: fold {f} leaves fewer than 2 classes for {method}")
        splits.append((train.subset(fit_idx), train.subset(held)))
    scores, fold_scores, failures = [], [], []
    for gi, point in enumerate(grid):
        params = resolve_params(method, point)
        row = []
        for f, (tr, te) in enumerate(splits):
            try:
                tr_p, te_p, _ = preprocess_pair(tr, te, pca_dim)
                model = fit_method(method, tr_p, params)
                row.append(mean_accuracy(pairwise_accuracies(model, te_p)))
            except Exception as exc:  # a failing grid point must not abort the search
                logger.warning("grid point %d failed on fold %d: %s", gi, f, exc)
                failures.append({"grid_index": gi, "fold": f, "error": f"{type(exc).__name__}: {exc}"})
                row.append(0.0)
        fold_scores.append(row)
        scores.append(float(np.mean(row)))
    best = int(np.argmax(scores))
    return CVResult(best_params=grid[best], best_score=scores[best], scores=scores,
                    fold_scores=fold_scores, failures=failures)
