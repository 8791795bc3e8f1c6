"""Multi-view datasets: container, text I/O, splitting, synthetic data, outliers.

A dataset holds ``n`` views of the same ``m`` objects. View ``v`` is a
``d_v x m`` matrix whose column ``k`` is the observation of object ``k``, so
columns are paired across views and share one class label.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

TRANSFORMS = ("linear-random", "rotation", "tanh-warp", "swissroll-lift")


class DatasetError(ValueError):
    """Raised for malformed dataset files or invariant violations."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MultiViewDataset:
    """Paired multi-view samples with shared class labels.

    Parameters
    ----------
    views : sequence of array-like, each of shape (d_v, m)
        Column ``k`` of every view is a sample of object ``k``.
    labels : array-like of shape (m,)
        Positive integer class ids, one per object.
    object_ids : array-like of shape (m,), optional
        Column positions of the objects in the dataset they were taken from.
        Defaults to ``0..m-1``.
    label_names : tuple, optional
        Original label tokens, ``label_names[c - 1]`` for dense id ``c``.
    """

    views: tuple
    labels: np.ndarray
    object_ids: np.ndarray = None
    label_names: tuple = field(default=None, compare=False)

    def __post_init__(self):
        views = tuple(_frozen(np.atleast_2d(v)) for v in self.views)
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise DatasetError("labels must be one-dimensional")
        if labels.size and not np.all(np.equal(np.mod(labels, 1), 0)):
            raise DatasetError("labels must be integers")
        labels = labels.astype(np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "labels", labels)
        ids = np.arange(labels.size) if self.object_ids is None else np.asarray(self.object_ids, dtype=np.int64)
        ids = ids.copy()
        ids.setflags(write=False)
        object.__setattr__(self, "object_ids", ids)
        self.validate()

    def validate(self) -> None:
        """Check every structural invariant; raise :class:`DatasetError` on failure."""
        if len(self.views) < 2:
            raise DatasetError(f"need at least 2 views, got {len(self.views)}")
        m = self.labels.size
        if m < 1:
            raise DatasetError("dataset has no objects")
        for v, X in enumerate(self.views):
            if X.ndim != 2:
                raise DatasetError(f"view {v} is not a matrix")
            if X.shape[1] != m:
                raise DatasetError(
                    f"column-count mismatch: view {v} has {X.shape[1]} columns, labels have {m}"
                )
            if not np.all(np.isfinite(X)):
                raise DatasetError(f"view {v} contains NaN or Inf")
        if np.any(self.labels < 1):
            raise DatasetError("labels must be positive class ids")
        if self.object_ids.shape != (m,):
            raise DatasetError("object_ids must have one entry per object")

    @property
    def n(self) -> int:
        return len(self.views)

    @property
    def m(self) -> int:
        return int(self.labels.size)

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    @property
    def C(self) -> int:
        return int(self.classes.size)

    @property
    def dims(self) -> tuple:
        return tuple(X.shape[0] for X in self.views)

    def subset(self, columns: Sequence[int]) -> "MultiViewDataset":
        """Dataset restricted to the given object columns, in the given order."""
        cols = np.asarray(columns, dtype=np.int64)
        return MultiViewDataset(
            views=tuple(X[:, cols] for X in self.views),
            labels=self.labels[cols],
            object_ids=self.object_ids[cols],
            label_names=self.label_names,
        )

    def with_views(self, views: Sequence[np.ndarray]) -> "MultiViewDataset":
        """Same objects and labels, new view matrices (e.g. after PCA)."""
        return MultiViewDataset(views=tuple(views), labels=self.labels,
                                object_ids=self.object_ids, label_names=self.label_names)

    def with_labels(self, labels: np.ndarray) -> "MultiViewDataset":
        return MultiViewDataset(views=self.views, labels=labels,
                                object_ids=self.object_ids, label_names=self.label_names)


# ---------------------------------------------------------------------------
# text I/O


def _read_matrix(path: Path) -> np.ndarray:
    """Read one sample per line, comma-separated; return the (d, m) matrix."""
    if not path.is_file():
        raise DatasetError(f"missing file: {path}")
    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            values = []
            for col, cell in enumerate(row, start=1):
                try:
                    x = float(cell)
                except ValueError:
                    raise DatasetError(
                        f"{path}: non-numeric cell {cell!r} at row {lineno}, column {col}"
                    ) from None
                if not math.isfinite(x):
                    raise DatasetError(f"{path}: non-finite value at row {lineno}, column {col}")
                values.append(x)
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DatasetError(
                    f"{path}: row {lineno} has {len(values)} values, expected {width}"
                )
            rows.append(values)
    if not rows:
        raise DatasetError(f"{path}: no samples")
    return np.array(rows, dtype=float).T


def _read_labels(path: Path) -> list:
    if not path.is_file():
        raise DatasetError(f"missing file: {path}")
    tokens = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tok = line.strip()
            if tok:
                tokens.append(tok)
    return tokens


def _dense_labels(tokens: Sequence[str]):
    """Map arbitrary label tokens to dense ids 1..C, numeric order when possible."""
    uniq = set(tokens)
    try:
        order = sorted(uniq, key=lambda t: (float(t), t))
    except ValueError:
        order = sorted(uniq)
    index = {tok: i + 1 for i, tok in enumerate(order)}
    return np.array([index[t] for t in tokens], dtype=np.int64), tuple(order)


def load_dataset(manifest_path) -> MultiViewDataset:
    """Load a dataset from a JSON manifest ``{"views": [...], "labels": ...}``.

    Relative paths inside the manifest resolve against the manifest's folder.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DatasetError(f"missing file: {manifest_path}")
    with open(manifest_path, encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{manifest_path}: invalid JSON ({exc})") from None
    if "views" not in manifest or "labels" not in manifest:
        raise DatasetError(f"{manifest_path}: manifest needs 'views' and 'labels'")
    base = manifest_path.parent
    views = [_read_matrix(base / p) for p in manifest["views"]]
    for v, X in enumerate(views[1:], start=1):
        if X.shape[1] != views[0].shape[1]:
            raise DatasetError(
                f"column-count mismatch: {manifest['views'][v]} has {X.shape[1]} samples, "
                f"{manifest['views'][0]} has {views[0].shape[1]}"
            )
    tokens = _read_labels(base / manifest["labels"])
    if len(tokens) != views[0].shape[1]:
        raise DatasetError(
            f"{manifest['labels']}: {len(tokens)} labels for {views[0].shape[1]} objects"
        )
    labels, names = _dense_labels(tokens)
    return MultiViewDataset(views=tuple(views), labels=labels, label_names=names)


def save_dataset(dataset: MultiViewDataset, directory, prefix: str = "view") -> Path:
    """Write views, labels and manifest into ``directory``; return the manifest path.

    Values are written with ``repr`` so a reload is bit-exact.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for v, X in enumerate(dataset.views, start=1):
        name = f"{prefix}{v}.csv"
        with open(directory / name, "w", encoding="utf-8") as fh:
            for col in X.T:
                fh.write(",".join(repr(float(x)) for x in col))
                fh.write("\n")
        names.append(name)
    with open(directory / "labels.txt", "w", encoding="utf-8") as fh:
        for c in dataset.labels:
            fh.write(f"{int(c)}\n")
    manifest = directory / "manifest.json"
    tmp = manifest.with_suffix(".json.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump({"views": names, "labels": "labels.txt"}, fh, indent=2)
    os.replace(tmp, manifest)
    return manifest


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic multi-view classification problem.

    Latent points are drawn around Gaussian class centers (minimum pairwise
    center distance equal to ``class_separation``, unit within-class spread),
    then every view lifts them into ``ambient_dim`` dimensions with its own
    random ``view_transform`` and adds Gaussian noise.
    """

    classes: int = 5
    objects_per_class: int = 10
    views: int = 3
    ambient_dim: int = 20
    view_transform: str = "linear-random"
    class_separation: float = 3.0
    noise_sigma: float = 0.1
    seed: int = 0
    latent_dim: int = 4
    shared_transform: bool = False

    def __post_init__(self):
        for name in ("classes", "objects_per_class", "views", "ambient_dim", "latent_dim"):
            if getattr(self, name) < 1:
                raise DatasetError(f"{name} must be positive")
        if self.class_separation <= 0:
            raise DatasetError("class_separation must be positive")
        if self.noise_sigma < 0:
            raise DatasetError("noise_sigma must be nonnegative")


def _class_centers(rng, C: int, dim: int, separation: float) -> np.ndarray:
    centers = rng.standard_normal((C, dim))
    if C == 1:
        return centers * 0.0
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    closest = dist[np.triu_indices(C, 1)].min()
    return centers * (separation / closest)


def _lift(rng, kind: str, Z: np.ndarray, ambient: int, scale: float) -> np.ndarray:
    latent = Z.shape[0]
    if kind == "linear-random":
        A = rng.standard_normal((ambient, latent)) / math.sqrt(latent)
        return A @ Z
    if kind == "rotation":
        if ambient < latent:
            raise DatasetError("rotation needs ambient_dim >= latent_dim")
        Q, R = np.linalg.qr(rng.standard_normal((ambient, ambient)))
        Q = Q * np.sign(np.diag(R))
        padded = np.vstack([Z, np.zeros((ambient - latent, Z.shape[1]))])
        return Q @ padded
    if kind == "tanh-warp":
        A = rng.standard_normal((ambient, latent)) / math.sqrt(latent)
        b = 0.5 * rng.standard_normal((ambient, 1))
        return scale * np.tanh(2.0 * (A @ Z) / scale + b)
    if kind == "swissroll-lift":
        R, _ = np.linalg.qr(rng.standard_normal((latent, latent)))
        Zr = R @ Z / scale
        t = 1.5 * math.pi * (1.0 + 2.0 / (1.0 + np.exp(-Zr[0])))
        rolled = np.vstack([t * np.cos(t), t * np.sin(t), Zr[1:]]) * (scale / math.pi)
        A = rng.standard_normal((ambient, rolled.shape[0])) / math.sqrt(rolled.shape[0])
        return A @ rolled
    raise DatasetError(f"unknown view_transform {kind!r}; expected one of {TRANSFORMS}")


def generate_synthetic(spec: SyntheticSpec) -> MultiViewDataset:
    """Draw a synthetic dataset; bit-identical for a fixed ``spec``."""
    if spec.view_transform not in TRANSFORMS:
        raise DatasetError(f"unknown view_transform {spec.view_transform!r}; expected one of {TRANSFORMS}")
    rng = np.random.default_rng(spec.seed)
    C, per = spec.classes, spec.objects_per_class
    centers = _class_centers(rng, C, spec.latent_dim, spec.class_separation)
    labels = np.repeat(np.arange(1, C + 1), per)
    Z = centers[labels - 1].T + rng.standard_normal((spec.latent_dim, labels.size))
    scale = math.sqrt(spec.class_separation ** 2 + 1.0)

    view_rngs = rng.spawn(spec.views)
    noise_rng = np.random.default_rng([spec.seed, 1])
    views = []
    for v in range(spec.views):
        trng = np.random.default_rng([spec.seed, 2]) if spec.shared_transform else view_rngs[v]
        X = _lift(trng, spec.view_transform, Z, spec.ambient_dim, scale)
        if spec.noise_sigma > 0:
            X = X + spec.noise_sigma * noise_rng.standard_normal(X.shape)
        views.append(X)
    return MultiViewDataset(views=tuple(views), labels=labels)


# ---------------------------------------------------------------------------
# splitting and outliers


def split_by_object(dataset: MultiViewDataset, train_fraction: float, seed: int):
    """Randomly partition objects (columns) into disjoint train and test sets.

    Returns ``(train, test)``; every view is split with the same columns and
    ``object_ids`` records where each column came from.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    m = dataset.m
    n_train = int(round(train_fraction * m))
    if n_train < 1 or n_train >= m:
        raise DatasetError(f"degenerate split: {n_train} train / {m - n_train} test objects")
    perm = np.random.default_rng(seed).permutation(m)
    train_cols = np.sort(perm[:n_train])
    test_cols = np.sort(perm[n_train:])
    return dataset.subset(train_cols), dataset.subset(test_cols)


def permute_pair_labels(dataset: MultiViewDataset, fraction: float, seed: int) -> MultiViewDataset:
    """Relabel ``round(fraction * m)`` objects with a different, uniformly drawn class.

    An object's label is shared by all of its views, so the relabeling stays
    consistent across views.
    """
    if not 0.0 <= fraction <= 1.0:
        raise DatasetError(f"fraction must lie in [0, 1], got {fraction}")
    count = int(round(fraction * dataset.m))
    if count == 0:
        return dataset
    classes = dataset.classes
    if classes.size < 2:
        raise DatasetError("cannot permute labels with a single class")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(dataset.m, size=count, replace=False)
    labels = dataset.labels.copy()
    for k in chosen:
        others = classes[classes != labels[k]]
        labels[k] = others[rng.integers(others.size)]
    return dataset.with_labels(labels)
