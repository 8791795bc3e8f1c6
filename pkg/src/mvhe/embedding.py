"""MvHE and its kernel extension: eigen solvers, kernels and projections."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.spatial.distance import cdist

from .alignment import build_J, build_U, build_V, view_neighbor_tables
from .preprocess import fix_signs


class SolverError(RuntimeError):
    """The eigen solver failed or the problem is too degenerate to solve."""


@dataclass(frozen=True)
class HyperParams:
    """Trade-offs ``lambda1`` (intra-view) and ``lambda2`` (inter-view), patch
    sizes ``p1``/``p2``, between-class weight ``beta`` and target dimension ``d``.

    ``paired_weight`` scales the paired-sample term; it is 1 except in
    ablations that switch that term off.
    """

    lambda1: float = 1e-2
    lambda2: float = 5e-2
    p1: int = 1
    p2: int = 15
    beta: float = 0.1
    d: int = 10
    paired_weight: float = 1.0

    def __post_init__(self):
        if self.paired_weight < 0:
            raise ValueError("paired_weight must be nonnegative")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be nonnegative")
        if self.p1 < 0 or self.p2 < 0 or self.p1 + self.p2 < 1:
            raise ValueError(f"invalid patch sizes p1={self.p1}, p2={self.p2}")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.d < 1:
            raise ValueError("d must be at least 1")


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("rbf", "linear"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and not self.sigma > 0:
            raise ValueError("rbf kernel needs sigma > 0")


def gram(kernel: KernelSpec, A_cols, B_cols) -> np.ndarray:
    """Kernel matrix between the columns of ``A_cols`` and ``B_cols``.

    rbf: ``exp(-||a - b||^2 / (2 sigma^2))``; linear: ``a^T b``.
    """
    A = np.asarray(A_cols, dtype=float)
    B = np.asarray(B_cols, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if A.shape[0] != B.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape[0]} vs {B.shape[0]}")
    if kernel.kind == "linear":
        return A.T @ B
    sq = cdist(A.T, B.T, "sqeuclidean")
    return np.exp(-sq / (2.0 * kernel.sigma ** 2))


def median_sigma(views) -> float:
    """Median pairwise distance over all views, a common rbf bandwidth default."""
    dists = []
    for X in views:
        D = cdist(X.T, X.T)
        dists.append(D[np.triu_indices_from(D, 1)])
    med = float(np.median(np.concatenate(dists))) if dists else 1.0
    return med if med > 0 else 1.0


def block_diag_data(views) -> np.ndarray:
    """Block-diagonal ``X`` with view ``v`` occupying rows of view v and columns v*m..(v+1)*m."""
    return la.block_diag(*[np.asarray(X, dtype=float) for X in views])


def alignment_components(dataset, params: HyperParams, include_paired: bool = False):
    """The three alignment matrices ``(J, U, V)`` as sparse matrices plus diagnostics."""
    J = build_J(dataset.n, dataset.m)
    tables = view_neighbor_tables(dataset, params.p1, params.p2)
    U = build_U(dataset, params.p1, params.p2, params.beta, tables=tables)
    if include_paired:
        tables = view_neighbor_tables(dataset, params.p1, params.p2, include_paired=True)
    V = build_V(dataset, params.p1, params.p2, params.beta, include_paired=include_paired, tables=tables)
    diagnostics = {"U": U.diagnostics, "V": V.diagnostics}
    return (J.matrix, U.matrix, V.matrix), diagnostics


def combined_alignment(components, params: HyperParams) -> sp.csr_matrix:
    J, U, V = components
    return (params.paired_weight * J + params.lambda1 * U + params.lambda2 * V).tocsr()


def objective_value(components, X_stacked, params: HyperParams, W_stacked) -> float:
    """``tr(W^T X (J + lambda1 U + lambda2 V) X^T W)`` (J scaled by ``paired_weight``)."""
    X = np.asarray(X_stacked, dtype=float)
    W = np.asarray(W_stacked, dtype=float)
    M = combined_alignment(components, params)
    if X.shape[1] != M.shape[0] or W.shape[0] != X.shape[0]:
        raise ValueError(f"shape mismatch: W {W.shape}, X {X.shape}, alignment {M.shape}")
    Y = W.T @ X
    return float(np.trace(Y @ (M @ Y.T)))


def _smallest_eigvecs(M: np.ndarray, d: int):
    if d > M.shape[0]:
        raise SolverError(f"d={d} exceeds problem order {M.shape[0]}")
    try:
        vals, vecs = la.eigh(M, subset_by_index=[0, d - 1], driver="evr")
    except (la.LinAlgError, ValueError) as exc:
        raise SolverError(f"eigensolver failed: {exc}") from exc
    return vals, fix_signs(vecs)


def _split_rows(W: np.ndarray, sizes) -> list:
    out, start = [], 0
    for s in sizes:
        out.append(W[start:start + s])
        start += s
    return out


@dataclass(frozen=True)
class LinearModel:
    """Per-view linear projections; view ``v`` embeds as ``W_v^T x``."""

    per_view_W: tuple
    params: object = None
    eigenvalues: np.ndarray = None
    method: str = "mvhe"
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def stacked_W(self) -> np.ndarray:
        return np.vstack(self.per_view_W)

    @property
    def n(self) -> int:
        return len(self.per_view_W)

    @property
    def d(self) -> int:
        return self.per_view_W[0].shape[1]

    def transform(self, view: int, samples) -> np.ndarray:
        return transform_linear(self, view, samples)

    def to_dict(self) -> dict:
        params = asdict(self.params) if hasattr(self.params, "__dataclass_fields__") else self.params
        return {
            "type": "linear",
            "method": self.method,
            "per_view_W": [W.tolist() for W in self.per_view_W],
            "params": params,
            "eigenvalues": None if self.eigenvalues is None else np.asarray(self.eigenvalues).tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LinearModel":
        params = doc.get("params")
        if doc.get("method") in ("mvhe",) and isinstance(params, dict):
            params = HyperParams(**params)
        eig = doc.get("eigenvalues")
        return cls(
            per_view_W=tuple(np.array(W, dtype=float) for W in doc["per_view_W"]),
            params=params,
            eigenvalues=None if eig is None else np.array(eig),
            method=doc.get("method", "mvhe"),
        )


@dataclass(frozen=True)
class KernelModel:
    """Per-view atom matrices; view ``v`` embeds as ``A_v^T k_v(X_v_train, x)``.

    ``centering`` holds per-view Gram statistics when the model was trained
    on centered kernels (kernel CCA); MvHE's kernel variant does not center.
    """

    per_view_A: tuple
    training_views: tuple
    kernel: KernelSpec
    params: object = None
    regularization_epsilon: float = 0.0
    eigenvalues: np.ndarray = None
    method: str = "kmvhe"
    centering: tuple = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def stacked_A(self) -> np.ndarray:
        return np.vstack(self.per_view_A)

    @property
    def n(self) -> int:
        return len(self.per_view_A)

    @property
    def d(self) -> int:
        return self.per_view_A[0].shape[1]

    def transform(self, view: int, samples) -> np.ndarray:
        return transform_kernel(self, view, samples)

    def to_dict(self) -> dict:
        params = asdict(self.params) if hasattr(self.params, "__dataclass_fields__") else self.params
        return {
            "type": "kernel",
            "method": self.method,
            "per_view_A": [A.tolist() for A in self.per_view_A],
            "training_views": [X.tolist() for X in self.training_views],
            "kernel": asdict(self.kernel),
            "params": params,
            "regularization_epsilon": self.regularization_epsilon,
            "eigenvalues": None if self.eigenvalues is None else np.asarray(self.eigenvalues).tolist(),
            "centering": None if self.centering is None else [
                {"col_mean": c[0].tolist(), "total_mean": float(c[1])} for c in self.centering
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "KernelModel":
        params = doc.get("params")
        if doc.get("method") == "kmvhe" and isinstance(params, dict):
            params = HyperParams(**params)
        eig = doc.get("eigenvalues")
        centering = doc.get("centering")
        return cls(
            per_view_A=tuple(np.array(A, dtype=float) for A in doc["per_view_A"]),
            training_views=tuple(np.array(X, dtype=float) for X in doc["training_views"]),
            kernel=KernelSpec(**doc["kernel"]),
            params=params,
            regularization_epsilon=doc.get("regularization_epsilon", 0.0),
            eigenvalues=None if eig is None else np.array(eig),
            method=doc.get("method", "kmvhe"),
            centering=None if centering is None else tuple(
                (np.array(c["col_mean"]), c["total_mean"]) for c in centering
            ),
        )


def model_from_dict(doc: dict):
    return KernelModel.from_dict(doc) if doc.get("type") == "kernel" else LinearModel.from_dict(doc)


def _check_d(dataset, params: HyperParams) -> None:
    if params.d > min(dataset.dims):
        raise SolverError(f"d={params.d} exceeds the smallest view dimension {min(dataset.dims)}")


def fit_mvhe(dataset, params: HyperParams, include_paired: bool = False) -> LinearModel:
    """Minimize ``tr(W^T X (J + l1 U + l2 V) X^T W)`` subject to ``W^T W = n I``.

    ``W`` is formed from the unit eigenvectors of the ``d`` smallest
    eigenvalues, scaled by ``sqrt(n)``.
    """
    _check_d(dataset, params)
    components, diagnostics = alignment_components(dataset, params, include_paired)
    Mp = combined_alignment(components, params)
    X = block_diag_data(dataset.views)
    M = X @ (Mp @ X.T)
    M = 0.5 * (M + M.T)
    vals, vecs = _smallest_eigvecs(M, params.d)
    W = math.sqrt(dataset.n) * vecs
    return LinearModel(
        per_view_W=tuple(_split_rows(W, dataset.dims)),
        params=params,
        eigenvalues=vals,
        method="mvhe",
        diagnostics=diagnostics,
    )


def kernel_epsilon(K: np.ndarray, rel: float = 1e-8) -> float:
    return rel * float(np.trace(K)) / K.shape[0]


def _kernel_basis(K_blocks, eps: float):
    """Eigen-directions of the block-diagonal Gram with eigenvalue above ``eps``.

    Returns ``(Q, lam)`` where ``Q`` has orthonormal columns in stacked
    coordinates and ``lam`` the matching eigenvalues.
    """
    sizes = [K.shape[0] for K in K_blocks]
    N = sum(sizes)
    cols, lams = [], []
    start = 0
    for K in K_blocks:
        lam, Q = la.eigh(0.5 * (K + K.T))
        keep = lam > eps
        block = np.zeros((N, int(keep.sum())))
        block[start:start + K.shape[0]] = Q[:, keep]
        cols.append(block)
        lams.append(lam[keep])
        start += K.shape[0]
    return np.hstack(cols), np.concatenate(lams)


def fit_kmvhe(dataset, params: HyperParams, kernel: KernelSpec,
              reg: float = 1e-8, include_paired: bool = False) -> KernelModel:
    """Minimize ``tr(A^T K M K A)`` subject to ``A^T K A = n I``.

    ``K`` is the block-diagonal training Gram. The generalized problem is
    reduced to a standard symmetric one on the eigen-directions of ``K``
    whose eigenvalue exceeds ``eps = reg * trace(K) / (mn)``; directions
    below ``eps`` are treated as the numerical null space of ``K``.
    """
    components, diagnostics = alignment_components(dataset, params, include_paired)
    Mp = combined_alignment(components, params)
    K_blocks = [gram(kernel, X, X) for X in dataset.views]
    K = la.block_diag(*K_blocks)
    eps = kernel_epsilon(K, reg)
    Q, lam = _kernel_basis(K_blocks, eps)
    if lam.size < params.d:
        raise SolverError(f"Gram rank {lam.size} below d={params.d}")
    root = np.sqrt(lam)
    # K Q = Q diag(lam), so Q^T K M K Q = diag(lam) Q^T M Q diag(lam); whitening by lam^-1/2
    G = (root[:, None] * (Q.T @ (Mp @ Q))) * root[None, :]
    G = 0.5 * (G + G.T)
    vals, B = _smallest_eigvecs(G, params.d)
    A = math.sqrt(dataset.n) * (Q @ (B / root[:, None]))
    A = fix_signs(A)
    m = dataset.m
    return KernelModel(
        per_view_A=tuple(A[v * m:(v + 1) * m] for v in range(dataset.n)),
        training_views=tuple(dataset.views),
        kernel=kernel,
        params=params,
        regularization_epsilon=eps,
        eigenvalues=vals,
        method="kmvhe",
        diagnostics={**diagnostics, "kernel_rank": int(lam.size)},
    )


def _check_view(model, view: int) -> None:
    if not 0 <= view < model.n:
        raise IndexError(f"view {view} out of range for {model.n} views")


def transform_linear(model: LinearModel, view: int, samples) -> np.ndarray:
    """``W_v^T samples``; a single vector gives a length-``d`` result."""
    _check_view(model, view)
    W = model.per_view_W[view]
    S = np.asarray(samples, dtype=float)
    vector = S.ndim == 1
    S = S[:, None] if vector else S
    if S.shape[0] != W.shape[0]:
        raise ValueError(f"samples have dimension {S.shape[0]}, view {view} expects {W.shape[0]}")
    out = W.T @ S
    return out[:, 0] if vector else out


def center_gram(Kxz: np.ndarray, col_mean: np.ndarray, total_mean: float) -> np.ndarray:
    """Center a train-by-test Gram with statistics of the training Gram."""
    return Kxz - col_mean[:, None] - Kxz.mean(axis=0)[None, :] + total_mean


def transform_kernel(model: KernelModel, view: int, samples) -> np.ndarray:
    """``A_v^T k(X_v_train, samples)``."""
    _check_view(model, view)
    Xtr = model.training_views[view]
    S = np.asarray(samples, dtype=float)
    vector = S.ndim == 1
    S = S[:, None] if vector else S
    if S.shape[0] != Xtr.shape[0]:
        raise ValueError(f"samples have dimension {S.shape[0]}, view {view} expects {Xtr.shape[0]}")
    Kxz = gram(model.kernel, Xtr, S)
    if model.centering is not None:
        col_mean, total = model.centering[view]
        Kxz = center_gram(Kxz, col_mean, total)
    out = model.per_view_A[view].T @ Kxz
    return out[:, 0] if vector else out
