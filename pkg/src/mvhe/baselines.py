"""Comparison methods: CCA, KCCA, MCCA, PLS, MvDA and MvMDA.

All solvers work on views stored as ``(d_v, m)`` matrices with paired
columns and return the same model types as MvHE so the harness treats them
uniformly. Ratio objectives are relaxed to generalized symmetric
eigenproblems with a small ridge on the denominator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .embedding import KernelModel, KernelSpec, LinearModel, SolverError, _split_rows, gram
from .preprocess import fix_signs


def _ridge(S: np.ndarray, rel: float) -> float:
    return rel * float(np.trace(S)) / S.shape[0] if S.shape[0] else 0.0


def _top_generalized(A: np.ndarray, B: np.ndarray, d: int):
    """Top-``d`` eigenpairs of ``A w = mu B w`` (B positive definite), descending."""
    N = A.shape[0]
    if d > N:
        raise SolverError(f"d={d} exceeds problem order {N}")
    try:
        vals, vecs = la.eigh(0.5 * (A + A.T), 0.5 * (B + B.T), subset_by_index=[N - d, N - 1])
    except (la.LinAlgError, ValueError) as exc:
        raise SolverError(f"generalized eigensolver failed: {exc}") from exc
    return vals[::-1], fix_signs(vecs[:, ::-1])


def _check_pair(X1, X2, d):
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    if X1.shape[1] != X2.shape[1]:
        raise ValueError(f"views have {X1.shape[1]} and {X2.shape[1]} samples")
    if d < 1 or d > min(X1.shape[0], X2.shape[0]):
        raise SolverError(f"d={d} outside [1, {min(X1.shape[0], X2.shape[0])}]")
    return X1, X2


def _inv_sqrt(S: np.ndarray) -> np.ndarray:
    lam, Q = la.eigh(0.5 * (S + S.T))
    if lam[0] <= 0:
        raise SolverError("covariance not positive definite after regularization")
    return (Q / np.sqrt(lam)) @ Q.T


def fit_cca(X1, X2, d: int, reg: float = 1e-10) -> LinearModel:
    """Canonical correlation analysis of two centered views.

    Solved by whitening each auto-covariance and taking the SVD of the
    whitened cross-covariance. ``model.eigenvalues`` holds the canonical
    correlations, nonincreasing.
    """
    X1, X2 = _check_pair(X1, X2, d)
    C11 = X1 @ X1.T
    C22 = X2 @ X2.T
    C12 = X1 @ X2.T
    C11 = C11 + _ridge(C11, reg) * np.eye(C11.shape[0])
    C22 = C22 + _ridge(C22, reg) * np.eye(C22.shape[0])
    R1, R2 = _inv_sqrt(C11), _inv_sqrt(C22)
    U, s, Vt = la.svd(R1 @ C12 @ R2)
    W1 = fix_signs(R1 @ U[:, :d])
    # keep each pair's correlation positive after the sign fix on W1
    W2 = R2 @ Vt[:d].T
    W2 = W2 * np.sign(np.sum((W1.T @ C12) * W2.T, axis=1))[None, :]
    return LinearModel(per_view_W=(W1, W2), params={"d": d, "reg": reg},
                       eigenvalues=s[:d], method="cca")


def canonical_correlations(X1, X2, W1, W2) -> np.ndarray:
    """Per-direction correlation of the two projected views."""
    Y1 = W1.T @ X1
    Y2 = W2.T @ X2
    num = np.sum(Y1 * Y2, axis=1)
    return num / np.sqrt(np.sum(Y1 * Y1, axis=1) * np.sum(Y2 * Y2, axis=1))


def _centering_stats(K: np.ndarray):
    return K.mean(axis=0), float(K.mean())


def _center(K: np.ndarray) -> np.ndarray:
    H = np.eye(K.shape[0]) - 1.0 / K.shape[0]
    return H @ K @ H


def fit_kcca(X1, X2, kernel: KernelSpec, d: int, reg: float = 1e-8) -> KernelModel:
    """Kernel CCA on centered Grams.

    The constraint ``A_v^T K_v K_v A_v = I`` is regularized to
    ``A_v^T (K_v + kappa_v I)^2 A_v = I`` with
    ``kappa_v = reg * trace(K_v) / m``. Canonical correlations are the
    singular values of ``R_1 R_2`` with ``R_v = K_v (K_v + kappa_v I)^-1``.
    """
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    if X1.shape[1] != X2.shape[1]:
        raise ValueError(f"views have {X1.shape[1]} and {X2.shape[1]} samples")
    m = X1.shape[1]
    if not 1 <= d <= m:
        raise SolverError(f"d={d} outside [1, {m}]")
    raw = [gram(kernel, X, X) for X in (X1, X2)]
    Ks = [_center(K) for K in raw]
    inv, Rs, kappas = [], [], []
    for K in Ks:
        kappa = max(_ridge(K, reg), np.finfo(float).tiny)
        lam, Q = la.eigh(0.5 * (K + K.T))
        lam = np.clip(lam, 0.0, None)
        inv.append((Q / (lam + kappa)) @ Q.T)
        Rs.append((Q * (lam / (lam + kappa))) @ Q.T)
        kappas.append(kappa)
    U, s, Vt = la.svd(Rs[0] @ Rs[1])
    A1 = fix_signs(inv[0] @ U[:, :d])
    A2 = inv[1] @ Vt[:d].T
    cross = (A1.T @ Ks[0] @ Ks[1] @ A2).diagonal()
    A2 = A2 * np.where(cross < 0, -1.0, 1.0)[None, :]
    return KernelModel(
        per_view_A=(A1, A2),
        training_views=(X1, X2),
        kernel=kernel,
        params={"d": d, "reg": reg},
        regularization_epsilon=float(max(kappas)),
        eigenvalues=s[:d],
        method="kcca",
        centering=tuple(_centering_stats(K) for K in raw),
    )


def fit_mcca(views, d: int, reg: float = 1e-10) -> LinearModel:
    """Multi-view CCA: maximize the sum of pairwise correlations.

    Solves the joint block problem ``C_off w = rho C_diag w`` and then
    orthonormalizes each view's block against its own covariance
    (``W_v <- W_v (W_v^T C_vv W_v)^-1/2``) so every per-view constraint
    ``W_v^T X_v X_v^T W_v = I`` holds.
    """
    views = [np.asarray(X, dtype=float) for X in views]
    if len(views) < 2:
        raise ValueError("need at least 2 views")
    if d < 1 or d > min(X.shape[0] for X in views):
        raise SolverError(f"d={d} outside [1, {min(X.shape[0] for X in views)}]")
    stacked = np.vstack(views)
    C = stacked @ stacked.T
    sizes = [V.shape[0] for V in views]
    D = la.block_diag(*[V @ V.T for V in views])
    D = D + _ridge(D, reg) * np.eye(D.shape[0])
    offdiag = C - la.block_diag(*[V @ V.T for V in views])
    vals, W = _top_generalized(offdiag, D, d)
    blocks = []
    for Wv, V in zip(_split_rows(W, sizes), views):
        S = Wv.T @ V @ V.T @ Wv
        blocks.append(Wv @ _inv_sqrt(S))
    return LinearModel(per_view_W=tuple(blocks), params={"d": d, "reg": reg},
                       eigenvalues=vals, method="mcca")


def fit_pls(X1, X2, d: int) -> LinearModel:
    """Partial least squares: top-``d`` singular pairs of ``X_1 X_2^T``."""
    X1, X2 = _check_pair(X1, X2, d)
    C = X1 @ X2.T
    U, s, Vt = la.svd(C)
    rank = int(np.sum(s > max(C.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)))
    if d > rank:
        raise SolverError(f"d={d} exceeds rank {rank} of the cross-covariance")
    W1 = fix_signs(U[:, :d])
    W2 = Vt[:d].T * np.sign(np.sum((W1.T @ C) * Vt[:d], axis=1))[None, :]
    return LinearModel(per_view_W=(W1, W2), params={"d": d}, eigenvalues=s[:d], method="pls")


# ---------------------------------------------------------------------------
# discriminant baselines


@dataclass(frozen=True)
class ScatterPair:
    S_B: np.ndarray
    S_W: np.ndarray
    regularization: float


def _embedded_columns(dataset) -> np.ndarray:
    """Columns of the block-diagonal data: sample x_v^k placed in view v's rows."""
    return la.block_diag(*dataset.views)


def mvda_scatter(dataset, reg: float = 1e-6) -> ScatterPair:
    """Between/within scatter over all views in the stacked input space.

    Class means pool the samples of a class from every view; ``N^c`` counts
    them (n times the number of class-``c`` objects).
    """
    Xe = _embedded_columns(dataset)
    labels = np.tile(dataset.labels, dataset.n)
    mu = Xe.mean(axis=1)
    N = Xe.shape[0]
    S_B = np.zeros((N, N))
    S_W = np.zeros((N, N))
    for c in dataset.classes:
        Xc = Xe[:, labels == c]
        mu_c = Xc.mean(axis=1)
        if Xc.shape[1] < Xe.shape[1]:  # a lone class sits exactly on the global mean
            diff = mu_c - mu
            S_B += Xc.shape[1] * np.outer(diff, diff)
        R = Xc - mu_c[:, None]
        S_W += R @ R.T
    return ScatterPair(S_B, S_W, _ridge(S_W, reg))


def _view_class_means(dataset):
    """``mu[v][c]``: class-``c`` mean of view ``v`` embedded in stacked rows."""
    sizes = dataset.dims
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    N = offsets[-1]
    means = []
    for v, X in enumerate(dataset.views):
        row = {}
        for c in dataset.classes:
            e = np.zeros(N)
            e[offsets[v]:offsets[v + 1]] = X[:, dataset.labels == c].mean(axis=1)
            row[c] = e
        means.append(row)
    return means


def mvmda_scatter(dataset, reg: float = 1e-6) -> ScatterPair:
    """Cross-view class-center scatter and per-view within-class scatter."""
    means = _view_class_means(dataset)
    classes = dataset.classes
    N = sum(dataset.dims)
    S_B = np.zeros((N, N))
    for p in classes:
        for q in classes:
            # sum over (i, j) of outer(d_i, d_j) equals outer(sum_i d_i, sum_j d_j)
            diff = sum(means[v][p] - means[v][q] for v in range(dataset.n))
            S_B += np.outer(diff, diff)
    Xe = _embedded_columns(dataset)
    S_W = np.zeros((N, N))
    m = dataset.m
    for v in range(dataset.n):
        block = Xe[:, v * m:(v + 1) * m]
        for c in classes:
            R = block[:, dataset.labels == c] - means[v][c][:, None]
            S_W += R @ R.T
    return ScatterPair(S_B, S_W, _ridge(S_W, reg))


def _fit_scatter(dataset, scatter: ScatterPair, d: int, method: str) -> LinearModel:
    if d < 1 or d > min(dataset.dims):
        raise SolverError(f"d={d} outside [1, {min(dataset.dims)}]")
    B = scatter.S_W + scatter.regularization * np.eye(scatter.S_W.shape[0])
    vals, W = _top_generalized(scatter.S_B, B, d)
    return LinearModel(per_view_W=tuple(_split_rows(W, dataset.dims)),
                       params={"d": d, "regularization": scatter.regularization},
                       eigenvalues=vals, method=method)


def fit_mvda(dataset, d: int, reg: float = 1e-6) -> LinearModel:
    """Multi-view discriminant analysis (generalized-eigen relaxation)."""
    return _fit_scatter(dataset, mvda_scatter(dataset, reg), d, "mvda")


def fit_mvmda(dataset, d: int, reg: float = 1e-6) -> LinearModel:
    """Multi-view modular discriminant analysis (generalized-eigen relaxation)."""
    return _fit_scatter(dataset, mvmda_scatter(dataset, reg), d, "mvmda")
