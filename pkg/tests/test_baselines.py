import numpy as np
import pytest
import scipy.linalg as la
from scipy.spatial.distance import pdist

from mvhe.baselines import (canonical_correlations, fit_cca, fit_kcca, fit_mcca, fit_mvda, fit_mvmda,
                            fit_pls, mvda_scatter, mvmda_scatter)
from mvhe.dataset import MultiViewDataset
from mvhe.embedding import KernelSpec, SolverError, gram

from conftest import random_dataset


def centered(X):
    return X - X.mean(axis=1, keepdims=True)


@pytest.fixture
def pair():
    rng = np.random.default_rng(21)
    Z = rng.standard_normal((3, 60))
    X1 = centered(rng.standard_normal((5, 3)) @ Z + 0.5 * rng.standard_normal((5, 60)))
    X2 = centered(rng.standard_normal((4, 3)) @ Z + 0.5 * rng.standard_normal((4, 60)))
    return X1, X2


def center_gram(K):
    H = np.eye(K.shape[0]) - 1.0 / K.shape[0]
    return H @ K @ H


# CCA

def test_cca_identical_views(pair):
    X1, _ = pair
    model = fit_cca(X1, X1, 3)
    assert abs(model.eigenvalues[0] - 1.0) <= 1e-6


def test_cca_orthogonal_invariance(pair):
    X1, X2 = pair
    Q, _ = np.linalg.qr(np.random.default_rng(2).standard_normal((5, 5)))
    a = fit_cca(X1, X1, 4).eigenvalues
    b = fit_cca(X1, Q @ X1, 4).eigenvalues
    assert np.abs(a - b).max() <= 1e-6


def test_cca_constraints_and_ordering(pair):
    X1, X2 = pair
    model = fit_cca(X1, X2, 3)
    W1, W2 = model.per_view_W
    assert np.abs(W1.T @ X1 @ X1.T @ W1 - np.eye(3)).max() <= 1e-6
    assert np.abs(W2.T @ X2 @ X2.T @ W2 - np.eye(3)).max() <= 1e-6
    rho = model.eigenvalues
    assert np.all(np.diff(rho) <= 1e-12) and rho.min() >= 0 and rho.max() <= 1 + 1e-9
    np.testing.assert_allclose(canonical_correlations(X1, X2, W1, W2), rho, atol=1e-8)


def test_cca_matches_principal_angles(pair):
    X1, X2 = pair
    # canonical correlations are the cosines of the angles between the row spaces
    angles = la.subspace_angles(X1.T, X2.T)
    np.testing.assert_allclose(fit_cca(X1, X2, 4).eigenvalues, np.cos(np.sort(angles)), atol=1e-8)


def test_cca_errors(pair):
    X1, X2 = pair
    with pytest.raises(ValueError):
        fit_cca(X1, X2[:, :10], 2)
    with pytest.raises(SolverError):
        fit_cca(X1, X2, 5)


# KCCA

def test_kcca_linear_matches_cca(pair):
    X1, X2 = pair
    cca = fit_cca(X1, X2, 3)
    kcca = fit_kcca(X1, X2, KernelSpec("linear"), 3)
    assert np.abs(cca.eigenvalues - kcca.eigenvalues).max() <= 1e-5


def test_kcca_constraint(pair):
    X1, X2 = pair
    model = fit_kcca(X1, X2, KernelSpec("rbf", 3.0), 3)
    for A, X in zip(model.per_view_A, (X1, X2)):
        K = center_gram(gram(model.kernel, X, X))
        assert np.abs(A.T @ K @ K @ A - np.eye(3)).max() <= 1e-5


def test_kcca_identical_views_rbf(pair):
    X1, _ = pair
    model = fit_kcca(X1, X1, KernelSpec("rbf", 3.0), 2)
    assert abs(model.eigenvalues[0] - 1.0) <= 1e-5


def test_kcca_linear_geometry_matches_cca(pair):
    X1, X2 = pair
    cca = fit_cca(X1, X2, 3)
    kcca = fit_kcca(X1, X2, KernelSpec("linear"), 3)
    a = pdist(np.hstack([cca.transform(0, X1), cca.transform(1, X2)]).T)
    b = pdist(np.hstack([kcca.transform(0, X1), kcca.transform(1, X2)]).T)
    assert np.abs(a - b).max() <= 1e-5


# MCCA

def test_mcca_two_views_matches_cca(pair):
    X1, X2 = pair
    cca = fit_cca(X1, X2, 3)
    mcca = fit_mcca([X1, X2], 3)
    a = pdist(np.hstack([cca.transform(0, X1), cca.transform(1, X2)]).T)
    b = pdist(np.hstack([mcca.transform(0, X1), mcca.transform(1, X2)]).T)
    assert np.abs(a - b).max() <= 1e-5


def test_mcca_identical_three_views(pair):
    X1, _ = pair
    model = fit_mcca([X1, X1, X1], 2)
    W = model.per_view_W
    for v in (1, 2):
        assert np.abs(np.abs(W[v][:, 0]) - np.abs(W[0][:, 0])).max() <= 1e-5
    Y = [Wv[:, :1].T @ X1 for Wv in W]
    total = sum((Y[i] @ Y[j].T).item() for i in range(3) for j in range(i + 1, 3))
    assert abs(total - 3.0) <= 1e-5


def test_mcca_constraint():
    rng = np.random.default_rng(4)
    views = [centered(rng.standard_normal((d, 40))) for d in (4, 5, 6)]
    model = fit_mcca(views, 3)
    for Wv, X in zip(model.per_view_W, views):
        assert np.abs(Wv.T @ X @ X.T @ Wv - np.eye(3)).max() <= 1e-6


# PLS

def test_pls_diagonal_axes():
    X1 = np.eye(3)
    X2 = np.diag([5.0, 3.0, 1.0])
    model = fit_pls(X1, X2, 3)
    np.testing.assert_allclose(np.abs(model.per_view_W[0]), np.eye(3), atol=1e-12)
    np.testing.assert_allclose(model.eigenvalues, [5, 3, 1])


def test_pls_matches_svd_and_is_orthonormal(pair):
    X1, X2 = pair
    model = fit_pls(X1, X2, 3)
    U, s, Vt = np.linalg.svd(X1 @ X2.T)
    for W, ref in ((model.per_view_W[0], U[:, :3]), (model.per_view_W[1], Vt[:3].T)):
        signs = np.sign(np.sum(W * ref, axis=0))
        assert np.abs(W - ref * signs).max() <= 1e-8
        assert np.abs(W.T @ W - np.eye(3)).max() <= 1e-10


def test_pls_rank_error():
    X1 = np.vstack([np.ones((1, 6)), np.zeros((2, 6))])
    with pytest.raises(SolverError):
        fit_pls(X1, X1, 2)


# MvDA / MvMDA

def test_single_class_between_scatter_zero(rng):
    ds = MultiViewDataset(views=[rng.standard_normal((3, 10)) for _ in range(2)], labels=np.ones(10, int))
    assert not mvda_scatter(ds).S_B.any()
    assert not mvmda_scatter(ds).S_B.any()


def embedded(ds, v, k):
    x = np.zeros(sum(ds.dims))
    start = sum(ds.dims[:v])
    x[start:start + ds.dims[v]] = ds.views[v][:, k]
    return x


def test_mvda_within_scatter_loop(rng):
    ds = random_dataset(rng, n=3, m=15, dims=[2, 3, 2], C=3)
    N = sum(ds.dims)
    S_W = np.zeros((N, N))
    for c in ds.classes:
        members = [embedded(ds, v, k) for v in range(ds.n) for k in range(ds.m) if ds.labels[k] == c]
        mu = np.mean(members, axis=0)
        for x in members:
            S_W += np.outer(x - mu, x - mu)
    sc = mvda_scatter(ds)
    assert np.abs(sc.S_W - S_W).max() <= 1e-8
    for S in (sc.S_B, sc.S_W):
        assert np.abs(S - S.T).max() <= 1e-10
        assert np.linalg.eigvalsh(S).min() >= -1e-9


def test_mvmda_between_scatter_quadruple_loop():
    rng = np.random.default_rng(5)
    ds = random_dataset(rng, n=2, m=12, dims=[3, 2], C=3)
    mu = {(v, c): np.mean([embedded(ds, v, k) for k in range(ds.m) if ds.labels[k] == c], axis=0)
          for v in range(2) for c in ds.classes}
    N = sum(ds.dims)
    S_B = np.zeros((N, N))
    for p in ds.classes:
        for q in ds.classes:
            for i in range(2):
                for j in range(2):
                    S_B += np.outer(mu[i, p] - mu[i, q], mu[j, p] - mu[j, q])
    sc = mvmda_scatter(ds)
    assert np.abs(sc.S_B - S_B).max() <= 1e-8
    assert np.linalg.eigvalsh(sc.S_W).min() >= -1e-9


def test_mvmda_identical_views_blocks_equal(rng):
    X = rng.standard_normal((3, 12))
    ds = MultiViewDataset(views=[X, X.copy()], labels=np.arange(12) % 3 + 1)
    S = mvmda_scatter(ds).S_B
    blocks = [S[:3, :3], S[:3, 3:], S[3:, :3], S[3:, 3:]]
    for b in blocks[1:]:
        assert np.abs(b - blocks[0]).max() <= 1e-12


@pytest.mark.parametrize("fit", [fit_mvda, fit_mvmda])
def test_discriminant_fit(rng, fit):
    ds = random_dataset(rng, n=3, m=30, dims=4, C=4)
    model = fit(ds, 3)
    assert model.n == 3 and model.d == 3
    assert np.all(np.diff(model.eigenvalues) <= 1e-12)
    again = fit(ds, 3)
    assert model.stacked_W.tobytes() == again.stacked_W.tobytes()
    with pytest.raises(SolverError):
        fit(ds, 5)
