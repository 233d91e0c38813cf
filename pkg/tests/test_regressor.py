import math

import numpy as np
import pytest

from dlst.encoder import LatentCodes
from dlst.regressor import (
    KernelSpec,
    RegressorConfig,
    RegressorError,
    fit_logistic_dimension,
    kernel_matrix,
    logistic_gradient,
    logistic_hessian,
    logistic_objective,
    median_gamma,
    predict_latent,
    sample_basis,
    train_regressor,
)


def _problem(seed, n=25, s=10, d=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    K = kernel_matrix(X, X[:s], KernelSpec("rbf", 0.5))
    z = rng.normal(size=n)
    return K, z


def test_initial_loss_is_n_log2():
    K, z = _problem(0)
    assert logistic_objective(np.zeros(K.shape[1]), K, z, 0.01) == pytest.approx(25 * math.log(2), rel=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    K, z = _problem(seed)
    c = np.random.default_rng(seed + 100).normal(size=K.shape[1])
    g = logistic_gradient(c, K, z, 0.01)
    h = 1e-6
    fd = np.array([
        (logistic_objective(c + h * e, K, z, 0.01) - logistic_objective(c - h * e, K, z, 0.01)) / (2 * h)
        for e in np.eye(len(c))
    ])
    assert np.abs(g - fd).max() / np.abs(fd).max() < 1e-6


def test_hessian_matches_gradient_differences():
    K, z = _problem(1)
    c = np.random.default_rng(7).normal(size=K.shape[1])
    H = logistic_hessian(c, K, z, 0.01)
    h = 1e-6
    fd = np.column_stack([
        (logistic_gradient(c + h * e, K, z, 0.01) - logistic_gradient(c - h * e, K, z, 0.01)) / (2 * h)
        for e in np.eye(len(c))
    ])
    np.testing.assert_allclose(H, fd, rtol=1e-5, atol=1e-7)


def test_convex_midpoint():
    K, z = _problem(2)
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = rng.normal(scale=3, size=(2, K.shape[1]))
        mid = logistic_objective((a + b) / 2, K, z, 0.01)
        assert mid <= (logistic_objective(a, K, z, 0.01) + logistic_objective(b, K, z, 0.01)) / 2


def test_newton_history_non_increasing():
    K, z = _problem(4)
    hist = []
    fit_logistic_dimension(K, z, 0.01, history=hist)
    assert len(hist) > 1
    assert all(b <= a for a, b in zip(hist, hist[1:]))


def test_newton_reaches_stationary_point():
    K, z = _problem(5)
    c = fit_logistic_dimension(K, z, 0.01, tol=1e-14)
    assert np.abs(logistic_gradient(c, K, z, 0.01)).max() < 1e-6


def test_huge_lambda_gives_half_probabilities():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 4))
    Z = rng.normal(size=(40, 2))
    model = train_regressor(X, Z, RegressorConfig(lam=1e9))
    assert np.linalg.norm(model.coeffs) < 1e-3
    _, probs = predict_latent(model, rng.normal(size=(10, 4)))
    assert np.abs(probs - 0.5).max() < 1e-3


def test_linear_separable_toy():
    X = np.array([[1.0], [-1.0]])
    z = np.array([[1.0], [-1.0]])
    model = train_regressor(X, z, RegressorConfig(lam=0.01, kernel=KernelSpec("linear")))
    f = model.decision_function(X)[:, 0]
    assert f[0] > 0 > f[1]
    _, probs = predict_latent(model, X)
    assert probs[0, 0] > 0.5 > probs[1, 0]


def test_zero_coefficients_predict_zero_codes():
    X = np.random.default_rng(1).normal(size=(10, 2))
    model = train_regressor(X, np.zeros((10, 2)))
    codes, probs = predict_latent(model, X)
    assert not codes.any()
    assert (probs == 0.5).all()


def test_probs_in_open_interval():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(60, 3))
    model = train_regressor(X, LatentCodes(rng.normal(size=(60, 2))))
    _, probs = predict_latent(model, rng.normal(size=(30, 3)) * 5)
    assert ((probs > 0) & (probs < 1)).all()


def test_ridge_mode():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 2))
    X -= X.mean(axis=0)
    Z = np.column_stack([X[:, 0] * 3 + 1, -X[:, 1]])
    model = train_regressor(X, Z, RegressorConfig(mode="ridge", lam=1e-6, kernel=KernelSpec("linear")))
    codes, probs = predict_latent(model, X)
    assert probs.shape == (50, 0)
    # centred features keep the standardized targets inside the linear span
    np.testing.assert_allclose(codes, Z, atol=1e-4)


def test_dimension_independence():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 3))
    Z = rng.normal(size=(30, 3))
    a = train_regressor(X, Z)
    b = train_regressor(X, Z[:, [0, 2, 1]])
    np.testing.assert_array_equal(a.coeffs[:, 0], b.coeffs[:, 0])
    np.testing.assert_array_equal(a.coeffs[:, 1], b.coeffs[:, 2])


def test_deterministic():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(80, 4))
    Z = rng.normal(size=(80, 2))
    cfg = RegressorConfig(basis_size=30, seed=7)
    a, b = train_regressor(X, Z, cfg), train_regressor(X, Z, cfg)
    assert a.coeffs.tobytes() == b.coeffs.tobytes()
    assert a.basis.tobytes() == b.basis.tobytes()


def test_kernel_properties():
    rng = np.random.default_rng(6)
    A = rng.normal(size=(8, 3))
    K = kernel_matrix(A, A, KernelSpec("rbf", 0.7))
    assert (np.diag(K) == 1.0).all()
    assert np.abs(K - K.T).max() <= 1e-12
    assert ((K > 0) & (K <= 1)).all()
    L = kernel_matrix(A, A, KernelSpec("linear"))
    assert np.abs(L - L.T).max() <= 1e-12


def test_median_gamma_positive():
    X = np.random.default_rng(7).normal(size=(300, 5))
    g = median_gamma(X)
    assert g > 0
    assert median_gamma(np.zeros((5, 2))) == 1.0


def test_sample_basis():
    X = np.arange(20.0).reshape(10, 2)
    full = sample_basis(X, 10, 3)
    assert sorted(full[:, 0].tolist()) == X[:, 0].tolist()
    np.testing.assert_array_equal(sample_basis(X, 4, 1), sample_basis(X, 4, 1))
    with pytest.raises(ValueError):
        sample_basis(X, 11, 0)


def test_sample_basis_uniform():
    X = np.arange(1000.0)[:, None]
    hits = np.zeros(1000)
    for seed in range(100):
        _, idx = sample_basis(X, 500, seed, return_index=True)
        hits[idx] += 1
    freq = hits / 100
    assert abs(freq.mean() - 0.5) < 1e-12
    # 100 draws per row: per-row sd is 0.05, so check the bulk rather than the tails
    assert np.mean(np.abs(freq - 0.5) <= 0.1) > 0.95


def test_dimension_mismatch():
    X = np.random.default_rng(8).normal(size=(10, 3))
    model = train_regressor(X, np.ones((10, 1)))
    with pytest.raises(ValueError, match="dimension mismatch"):
        predict_latent(model, np.zeros((2, 4)))


def test_non_finite_kernel():
    with pytest.raises(RegressorError):
        kernel_matrix(np.array([[1e200]]), np.array([[1e200]]), KernelSpec("linear"))


def test_bad_configs():
    with pytest.raises(ValueError):
        RegressorConfig(mode="svm")
    with pytest.raises(ValueError):
        KernelSpec("poly")
    with pytest.raises(ValueError):
        RegressorConfig(lam=-1)
