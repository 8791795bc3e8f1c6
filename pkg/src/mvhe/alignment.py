"""Whole alignment: the mn x mn matrices J, U, V and their loop-form oracle.

For stacked embeddings ``Y = W^T X`` (one column per (view, object) in
view-major order) the three objectives are ``tr(Y J Y^T)`` (paired samples),
``tr(Y U Y^T)`` (intra-view patches) and ``tr(Y V Y^T)`` (inter-view patches).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .patches import build_inter_patch, build_intra_patch, neighbor_table

SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class AlignmentMatrix:
    kind: str
    matrix: sp.csr_matrix
    order: int
    diagnostics: dict = field(default_factory=dict)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def to_triplets(self, path) -> None:
        """Dump the nonzeros as ``row,col,value`` lines (debugging aid)."""
        coo = self.matrix.tocoo()
        with open(path, "w", encoding="utf-8") as fh:
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{int(r)},{int(c)},{float(v)!r}\n")


def _symmetrized(M: sp.spmatrix) -> sp.csr_matrix:
    M = M.tocsr()
    dev = abs(M - M.T).max() if M.nnz else 0.0
    if dev > SYMMETRY_TOL:
        raise ArithmeticError(f"assembled matrix asymmetric by {dev:.3e}")
    return ((M + M.T) * 0.5).tocsr()


def _block_rotation(n: int, m: int, i: int) -> sp.csr_matrix:
    """``J_i``: identity blocks shifted so row r maps to column r + (n-i+1)m (mod mn)."""
    N = n * m
    rows = np.arange(N)
    cols = (rows + (n - i + 1) * m) % N
    return sp.csr_matrix((np.ones(N), (rows, cols)), shape=(N, N))


def build_J_product(n: int, m: int) -> sp.csr_matrix:
    """``J = sum_{i=2..n} (I - J_i)(I - J_i)^T`` evaluated literally."""
    if n < 2:
        raise ValueError(f"need n >= 2 views, got {n}")
    N = n * m
    eye = sp.identity(N, format="csr")
    J = sp.csr_matrix((N, N))
    for i in range(2, n + 1):
        D = eye - _block_rotation(n, m, i)
        J = J + D @ D.T
    J.eliminate_zeros()
    return J


def build_J(n: int, m: int) -> AlignmentMatrix:
    """Paired-sample alignment ``J = sum_{i=2..n} (I - J_i)(I - J_i)^T``.

    The sum collapses to ``2(n-1)`` on the diagonal and ``-2`` between the
    samples of one object in two different views, which is assembled directly.
    """
    if n < 2:
        raise ValueError(f"need n >= 2 views, got {n}")
    if m < 1:
        raise ValueError("need m >= 1")
    N = n * m
    a, b = np.nonzero(~np.eye(n, dtype=bool))
    k = np.arange(m)
    rows = np.concatenate([np.arange(N), (a[:, None] * m + k).ravel()])
    cols = np.concatenate([np.arange(N), (b[:, None] * m + k).ravel()])
    vals = np.concatenate([np.full(N, 2.0 * (n - 1)), np.full(a.size * m, -2.0)])
    J = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    return AlignmentMatrix("J", _symmetrized(J), N)


def _star_triplets(anchors, within, between, beta, scale):
    """Triplets of the patch matrices for a batch of star-shaped patches.

    ``anchors`` has shape (b,), ``within``/``between`` hold global member
    columns (or -1) of shape (b, p1)/(b, p2). Missing members carry zero
    weight, which is the same as dropping them from the patch.
    """
    members = np.hstack([within, between])
    theta = np.hstack([np.ones(within.shape, float), np.full(between.shape, -float(beta))]) * scale
    theta = np.where(members >= 0, theta, 0.0)
    members = np.where(members >= 0, members, 0)
    a = np.broadcast_to(anchors[:, None], members.shape)
    rows = np.concatenate([anchors, a.ravel(), members.ravel(), members.ravel()])
    cols = np.concatenate([anchors, members.ravel(), a.ravel(), members.ravel()])
    vals = np.concatenate([theta.sum(axis=1), -theta.ravel(), -theta.ravel(), theta.ravel()])
    return rows, cols, vals


def _diagnostics(within, between, p1, p2):
    w = (within >= 0).sum(axis=1)
    b = (between >= 0).sum(axis=1)
    return {
        "patches": int(w.size),
        "empty_patches": int(np.sum(w + b == 0)),
        "clamped_within": int(np.sum(w < p1)),
        "clamped_between": int(np.sum(b < p2)),
    }


def _merge(a: dict, b: dict) -> dict:
    return {k: a.get(k, 0) + b.get(k, 0) for k in set(a) | set(b)}


def view_neighbor_tables(dataset, p1: int, p2: int, include_paired: bool = False) -> list:
    """Per host view, the ``(within, between)`` neighbor table of every object.

    Intra patches of ``(v, k)`` and inter patches anchored at ``(i, k)``
    hosted in view ``v`` share the query ``x_v^k`` and candidate pool, so one
    table per view serves both (the inter table differs only when the paired
    sample is kept in the pool).
    """
    return [neighbor_table(X, X, dataset.labels, p1, p2, exclude_diagonal=not include_paired)
            for X in dataset.views]


def _assemble(kind, dataset, pairs, tables, p1, p2, beta, scale):
    if p1 < 0 or p2 < 0 or p1 + p2 < 1:
        raise ValueError(f"invalid patch sizes p1={p1}, p2={p2}")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    n, m = dataset.n, dataset.m
    N = n * m
    rows, cols, vals = [], [], []
    diag = {}
    objects = np.arange(m)
    for anchor_view, host_view in pairs:
        within, between = tables[host_view]
        offset = host_view * m
        gw = np.where(within >= 0, within + offset, -1)
        gb = np.where(between >= 0, between + offset, -1)
        r, c, v = _star_triplets(anchor_view * m + objects, gw, gb, beta, scale)
        rows.append(r)
        cols.append(c)
        vals.append(v)
        diag = _merge(diag, _diagnostics(within, between, p1, p2))
    M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N, N)).tocsr()
    M.sum_duplicates()
    return AlignmentMatrix(kind, _symmetrized(M), N, diag)


def build_U(dataset, p1: int, p2: int, beta: float, scale: float = 1.0,
            tables=None) -> AlignmentMatrix:
    """Sum of all intra-view patch matrices scattered into stacked coordinates."""
    if tables is None:
        tables = view_neighbor_tables(dataset, p1, p2)
    pairs = [(v, v) for v in range(dataset.n)]
    return _assemble("U", dataset, pairs, tables, p1, p2, beta, scale)


def build_V(dataset, p1: int, p2: int, beta: float, scale: float = 1.0,
            include_paired: bool = False, tables=None) -> AlignmentMatrix:
    """Sum of all inter-view patch matrices (anchor in view i, members in view j != i)."""
    if tables is None:
        tables = view_neighbor_tables(dataset, p1, p2, include_paired)
    n = dataset.n
    pairs = [(i, j) for i in range(n) for j in range(n) if j != i]
    return _assemble("V", dataset, pairs, tables, p1, p2, beta, scale)


def stacked_embedding(dataset, W_stacked: np.ndarray) -> np.ndarray:
    """``Y = W^T X`` for the block-diagonal data matrix, shape (d, n*m)."""
    W_stacked = np.asarray(W_stacked, dtype=float)
    total = sum(dataset.dims)
    if W_stacked.ndim != 2 or W_stacked.shape[0] != total:
        raise ValueError(f"W has {W_stacked.shape[0] if W_stacked.ndim else 0} rows, data needs {total}")
    blocks = []
    start = 0
    for X in dataset.views:
        stop = start + X.shape[0]
        blocks.append(W_stacked[start:stop].T @ X)
        start = stop
    return np.hstack(blocks)


def naive_objectives(dataset, W_stacked, p1: int, p2: int, beta: float,
                     include_paired: bool = False):
    """Evaluate the three objectives by direct loops over samples and patches.

    Returns ``(paired, intra, inter)``. No alignment matrices are involved;
    the patches come from the single-query neighbor search.
    """
    Y = stacked_embedding(dataset, W_stacked)
    n, m = dataset.n, dataset.m

    def y(view, obj):
        return Y[:, view * m + obj]

    paired = 0.0
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            for k in range(m):
                diff = y(i, k) - y(j, k)
                paired += float(diff @ diff)

    def patch_sum(patch):
        ya = y(patch.anchor.view, patch.anchor.object)
        s = 0.0
        for g in patch.within_class:
            diff = ya - y(g.view, g.object)
            s += float(diff @ diff)
        for g in patch.between_class:
            diff = ya - y(g.view, g.object)
            s -= beta * float(diff @ diff)
        return s

    intra = 0.0
    inter = 0.0
    for i in range(n):
        for k in range(m):
            intra += patch_sum(build_intra_patch(dataset, (i, k), p1, p2))
            for j in range(n):
                if j != i:
                    inter += patch_sum(build_inter_patch(dataset, (i, k), j, p1, p2, include_paired))
    return paired, intra, inter
