"""Per-view centering and PCA, fit on training columns only."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-magnitude entry is positive."""
    vectors = np.array(vectors, dtype=float, copy=True)
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray
    explained_variance: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def output_dim(self) -> int:
        return self.basis.shape[1]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "basis": self.basis.tolist(),
            "explained_variance": self.explained_variance.tolist(),
        }


def pca_fit(view: np.ndarray, target_dim: int) -> PcaModel:
    """Fit PCA to the columns of ``view`` (shape ``(d, m)``).

    The covariance uses divisor ``m``. Raises ``ValueError`` when
    ``target_dim`` is outside ``[1, min(d, m)]`` or exceeds the numerical
    rank of the centered data.
    """
    X = np.asarray(view, dtype=float)
    d, m = X.shape
    if not 1 <= target_dim <= min(d, m):
        raise ValueError(f"target_dim={target_dim} outside [1, {min(d, m)}]")
    mean = X.mean(axis=1)
    Xc = X - mean[:, None]
    U, s, _ = np.linalg.svd(Xc, full_matrices=False)
    tol = max(d, m) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    if target_dim > rank:
        raise ValueError(f"target_dim={target_dim} exceeds data rank {rank}")
    basis = fix_signs(U[:, :target_dim])
    return PcaModel(mean=mean, basis=basis, explained_variance=s[:target_dim] ** 2 / m)


def pca_transform(model: PcaModel, samples: np.ndarray) -> np.ndarray:
    """Project samples of shape ``(d, t)`` (or a single length-``d`` vector)."""
    samples = np.asarray(samples, dtype=float)
    vector = samples.ndim == 1
    S = samples[:, None] if vector else samples
    if S.shape[0] != model.input_dim:
        raise ValueError(f"samples have dimension {S.shape[0]}, model expects {model.input_dim}")
    out = model.basis.T @ (S - model.mean[:, None])
    return out[:, 0] if vector else out


def pca_reconstruct(model: PcaModel, projected: np.ndarray) -> np.ndarray:
    projected = np.asarray(projected, dtype=float)
    if projected.ndim == 1:
        return model.basis @ projected + model.mean
    return model.basis @ projected + model.mean[:, None]


def fit_view_pcas(views, target_dim: int) -> list:
    """One PCA per view; ``target_dim`` is clipped to each view's size limit."""
    models = []
    for X in views:
        k = min(target_dim, X.shape[0], X.shape[1])
        models.append(pca_fit(X, k))
    return models
