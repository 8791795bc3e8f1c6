"""Nearest-neighbor search and local patches for the intra/inter-view objectives.

Indices are 0-based. A sample is addressed by ``(view, object)``; in the
stacked layout ``Y = [Y_1 ... Y_n]`` its column is ``view * m + object``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class GlobalIndex(NamedTuple):
    view: int
    object: int
    flat: int

    @classmethod
    def of(cls, view: int, obj: int, m: int) -> "GlobalIndex":
        return cls(int(view), int(obj), int(view) * m + int(obj))


@dataclass(frozen=True)
class PatchIndex:
    anchor: GlobalIndex
    within_class: tuple
    between_class: tuple
    host_view: int

    @property
    def p1_eff(self) -> int:
        return len(self.within_class)

    @property
    def p2_eff(self) -> int:
        return len(self.between_class)

    @property
    def members(self) -> tuple:
        """Anchor followed by within-class then between-class neighbors."""
        return (self.anchor,) + self.within_class + self.between_class


@dataclass(frozen=True)
class PatchLaplacian:
    size: int
    matrix: np.ndarray
    theta: np.ndarray


def nearest_neighbors(view_data, labels, query, same_class_as, want_same, count, exclude=()):
    """Column indices of the ``count`` nearest candidates to ``query``.

    Candidates are columns whose label equals (``want_same``) or differs from
    ``same_class_as``, minus ``exclude``. Sorted by Euclidean distance, ties by
    column index; fewer than ``count`` are returned if the pool is smaller.
    """
    X = np.asarray(view_data, dtype=float)
    q = np.asarray(query, dtype=float).reshape(-1)
    if q.size != X.shape[0]:
        raise ValueError(f"query has dimension {q.size}, data has {X.shape[0]}")
    if count < 0:
        raise ValueError("count must be nonnegative")
    labels = np.asarray(labels)
    mask = (labels == same_class_as) if want_same else (labels != same_class_as)
    excl = np.fromiter(exclude, dtype=np.int64)
    mask[excl] = False
    cand = np.flatnonzero(mask)
    dist = ((X[:, cand] - q[:, None]) ** 2).sum(axis=0)
    order = np.lexsort((cand, dist))
    return [int(c) for c in cand[order[:count]]]


def _check_counts(p1: int, p2: int) -> None:
    if p1 < 0 or p2 < 0 or p1 + p2 < 1:
        raise ValueError(f"invalid patch sizes p1={p1}, p2={p2}")


def _check_anchor(dataset, anchor) -> GlobalIndex:
    view, obj = anchor[0], anchor[1]
    if not (0 <= view < dataset.n and 0 <= obj < dataset.m):
        raise IndexError(f"anchor ({view}, {obj}) out of range for n={dataset.n}, m={dataset.m}")
    return GlobalIndex.of(view, obj, dataset.m)


def _patch(dataset, anchor: GlobalIndex, host: int, p1: int, p2: int, exclude) -> PatchIndex:
    X = dataset.views[host]
    y = dataset.labels
    query = X[:, anchor.object]
    c = y[anchor.object]
    m = dataset.m
    within = nearest_neighbors(X, y, query, c, True, p1, exclude)
    between = nearest_neighbors(X, y, query, c, False, p2, exclude)
    return PatchIndex(
        anchor=anchor,
        within_class=tuple(GlobalIndex.of(host, k, m) for k in within),
        between_class=tuple(GlobalIndex.of(host, k, m) for k in between),
        host_view=host,
    )


def build_intra_patch(dataset, anchor, p1: int, p2: int) -> PatchIndex:
    """Patch of ``anchor`` from its own view: up to p1 same-class and p2 other-class neighbors."""
    _check_counts(p1, p2)
    a = _check_anchor(dataset, anchor)
    return _patch(dataset, a, a.view, p1, p2, exclude=(a.object,))


def build_inter_patch(dataset, anchor, other_view: int, p1: int, p2: int,
                      include_paired: bool = False) -> PatchIndex:
    """Patch of ``anchor`` in ``other_view``, searched around its paired sample there.

    The paired sample is excluded from the candidates unless ``include_paired``.
    """
    _check_counts(p1, p2)
    a = _check_anchor(dataset, anchor)
    if not 0 <= other_view < dataset.n or other_view == a.view:
        raise ValueError(f"other_view={other_view} must differ from anchor view {a.view} and be in range")
    exclude = () if include_paired else (a.object,)
    return _patch(dataset, a, other_view, p1, p2, exclude)


def patch_laplacian(p1_eff: int, p2_eff: int, beta: float, scale: float = 1.0) -> PatchLaplacian:
    """Objective matrix of one patch, ``[-e^T; I] diag(theta) [-e, I]``.

    ``theta`` is 1 for the within-class members and ``-beta`` for the
    between-class members (times ``scale``). Row 0 is the anchor.
    """
    P = p1_eff + p2_eff
    if P < 1:
        raise ValueError("empty patch")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    theta = scale * np.concatenate([np.ones(p1_eff), np.full(p2_eff, -float(beta))])
    stencil = np.hstack([-np.ones((P, 1)), np.eye(P)])
    L = stencil.T @ np.diag(theta) @ stencil
    return PatchLaplacian(size=P + 1, matrix=L, theta=theta)


# ---------------------------------------------------------------------------
# batched neighbor tables used by the alignment assembly


def _sorted_neighbors(dist: np.ndarray, eligible: np.ndarray, count: int) -> np.ndarray:
    """Per row, the first ``count`` eligible columns by (distance, index); -1 pads."""
    if count == 0:
        return np.empty((dist.shape[0], 0), dtype=np.int64)
    d = np.where(eligible, dist, np.inf)
    order = np.argsort(d, axis=1, kind="stable")[:, :count]
    ok = np.take_along_axis(eligible, order, axis=1)
    return np.where(ok, order, -1)


def neighbor_table(host_data: np.ndarray, query_data: np.ndarray, labels: np.ndarray,
                   p1: int, p2: int, exclude_diagonal: bool = True):
    """Neighbor indices for all queries at once.

    Query ``k`` is column ``k`` of ``query_data``; candidates are the columns of
    ``host_data``, with column ``k`` removed when ``exclude_diagonal``. Returns
    ``(within, between)`` integer arrays of shapes ``(m, p1)`` and ``(m, p2)``
    padded with -1 where the pool runs out.
    """
    diff = query_data.T[:, None, :] - host_data.T[None, :, :]
    dist = np.einsum("ijk,ijk->ij", diff, diff)
    same = labels[:, None] == labels[None, :]
    keep = np.ones_like(same)
    if exclude_diagonal:
        np.fill_diagonal(keep, False)
    return (_sorted_neighbors(dist, same & keep, p1),
            _sorted_neighbors(dist, ~same & keep, p2))
