import numpy as np
import pytest

from mvhe.preprocess import fix_signs, pca_fit, pca_reconstruct, pca_transform


@pytest.fixture
def planar():
    rng = np.random.default_rng(3)
    basis, _ = np.linalg.qr(rng.standard_normal((5, 2)))
    coeffs = rng.standard_normal((2, 40)) * [[3.0], [1.0]]
    offset = rng.standard_normal((5, 1))
    return basis @ coeffs + offset


def test_exact_low_rank_reconstruction(planar):
    model = pca_fit(planar, 2)
    rec = pca_reconstruct(model, pca_transform(model, planar))
    assert np.abs(rec - planar).max() <= 1e-8


def test_reconstruct_is_idempotent(planar):
    model = pca_fit(planar, 2)
    once = pca_reconstruct(model, pca_transform(model, planar))
    twice = pca_reconstruct(model, pca_transform(model, once))
    assert np.abs(once - twice).max() <= 1e-10


def test_full_dim_captures_total_variance():
    X = np.random.default_rng(4).standard_normal((6, 30))
    model = pca_fit(X, 6)
    total = np.sum((X - X.mean(axis=1, keepdims=True)) ** 2) / X.shape[1]
    assert abs(model.explained_variance.sum() - total) <= 1e-8 * total


def test_matches_covariance_eigendecomposition():
    X = np.random.default_rng(5).standard_normal((10, 50))
    Xc = X - X.mean(axis=1, keepdims=True)
    cov = Xc @ Xc.T / X.shape[1]
    vals, vecs = np.linalg.eigh(cov)
    top = vecs[:, ::-1][:, :4]
    model = pca_fit(X, 4)
    for j in range(4):
        v = top[:, j] * np.sign(top[:, j] @ model.basis[:, j])
        assert np.abs(v - model.basis[:, j]).max() <= 1e-8
    np.testing.assert_allclose(model.explained_variance, vals[::-1][:4], rtol=1e-10)


def test_basis_properties():
    X = np.random.default_rng(6).standard_normal((8, 25))
    model = pca_fit(X, 5)
    assert np.abs(model.basis.T @ model.basis - np.eye(5)).max() <= 1e-10
    assert np.all(np.diff(model.explained_variance) <= 0)
    idx = np.argmax(np.abs(model.basis), axis=0)
    assert np.all(model.basis[idx, np.arange(5)] > 0)


def test_transform_mean_is_zero_and_affine():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((4, 20))
    model = pca_fit(X, 3)
    assert np.abs(pca_transform(model, model.mean)).max() <= 1e-12
    a, b = rng.standard_normal(4), rng.standard_normal(4)
    lhs = pca_transform(model, a) + pca_transform(model, b)
    rhs = pca_transform(model, a + b - model.mean)
    assert np.abs(lhs - rhs).max() <= 1e-12


def test_errors():
    X = np.random.default_rng(8).standard_normal((4, 3))
    with pytest.raises(ValueError):
        pca_fit(X, 0)
    with pytest.raises(ValueError):
        pca_fit(X, 4)
    flat = np.ones((3, 10))
    with pytest.raises(ValueError, match="rank"):
        pca_fit(flat, 1)
    model = pca_fit(X, 2)
    with pytest.raises(ValueError, match="dimension"):
        pca_transform(model, np.ones((5, 2)))


def test_fix_signs():
    V = np.array([[0.1, -3.0], [-0.9, 1.0]])
    np.testing.assert_array_equal(fix_signs(V), [[-0.1, 3.0], [0.9, -1.0]])
