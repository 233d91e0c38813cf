import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dlst.encoder import (
    EncoderConfig,
    EncoderDivergenceError,
    LatentCodes,
    compute_label_distribution,
    compute_latent_distribution,
    cross_entropy_loss,
    default_latent_dim,
    initial_codes,
    kl_divergence,
    kl_gradient,
    optimize_latent,
)

from oracles import cross_entropy, pair_distribution

Y3 = np.array([[1, 0], [1, 0], [0, 1]])
Z3 = np.array([[0.0], [0.0], [1.0]])


def _check_valid(P, n):
    assert P.shape == (n, n)
    assert np.all(np.diag(P) == 0)
    np.testing.assert_array_equal(P, P.T)
    assert abs(P.sum() - 1.0) <= 1e-12
    off = ~np.eye(n, dtype=bool)
    assert (P[off] >= 1e-12).all()


def test_worked_label_distribution():
    Q = compute_label_distribution(Y3).probs
    assert Q[0, 1] == Q[1, 0] == 0.3
    assert Q[0, 2] == Q[2, 0] == Q[1, 2] == Q[2, 1] == 0.1


def test_worked_latent_distribution():
    U = compute_latent_distribution(LatentCodes(Z3)).probs
    assert U[0, 1] == U[1, 0] == 0.25
    assert U[0, 2] == U[1, 2] == U[2, 0] == U[2, 1] == 0.125


def test_worked_kl():
    q = compute_label_distribution(Y3)
    u = compute_latent_distribution(Z3)
    expected = 2 * (0.3 * math.log(1.2) + 0.2 * math.log(0.8))
    assert kl_divergence(q, u) == pytest.approx(expected, abs=1e-12)
    assert kl_divergence(q, u) == pytest.approx(0.020135, abs=1e-6)


def test_identical_rows_uniform():
    Q = compute_label_distribution(np.ones((5, 3))).probs
    off = ~np.eye(5, dtype=bool)
    np.testing.assert_allclose(Q[off], 1 / 20, rtol=0, atol=1e-15)


def test_matches_loop_oracle():
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(7, 3))
    np.testing.assert_allclose(compute_latent_distribution(Z).probs, pair_distribution(Z.tolist()), atol=1e-15)


def test_floor_applied_for_far_points():
    Z = np.array([[0.0], [0.0], [1e9]])
    _check_valid(compute_latent_distribution(Z).probs, 3)


@pytest.mark.parametrize("bad", [np.ones((1, 2)), np.array([[0.0], [np.nan]])])
def test_invalid_inputs(bad):
    with pytest.raises(ValueError):
        compute_latent_distribution(bad)


def test_kl_self_zero_and_mismatch():
    q = compute_label_distribution(Y3)
    assert kl_divergence(q, q) == 0.0
    with pytest.raises(ValueError):
        kl_divergence(q, compute_latent_distribution(np.zeros((4, 1)) + np.arange(4)[:, None]))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 9), st.integers(1, 4), st.integers(0, 10**6))
def test_kl_nonnegative(n, r, seed):
    rng = np.random.default_rng(seed)
    q = compute_label_distribution(rng.integers(0, 2, (n, 3)))
    u = compute_latent_distribution(rng.normal(size=(n, r)))
    assert kl_divergence(q, u) >= -1e-15


def test_gradient_zero_when_q_equals_u():
    Z = np.random.default_rng(1).normal(size=(6, 2))
    q = compute_latent_distribution(Z)
    assert np.abs(kl_gradient(q, Z)).max() < 1e-15


def test_gradient_two_points_zero():
    q = compute_label_distribution([[1, 0], [0, 1]])
    assert np.abs(kl_gradient(q, np.array([[0.3, -1.0], [2.0, 0.5]]))).max() < 1e-15


def test_gradient_against_loop_oracle_fd():
    rng = np.random.default_rng(4)
    Y = rng.integers(0, 2, (5, 4))
    Z = rng.normal(size=(5, 3))
    q = compute_label_distribution(Y)
    g = kl_gradient(q, Z)
    h = 1e-5
    fd = np.zeros_like(Z)
    for i in range(5):
        for k in range(3):
            zp, zm = Z.copy(), Z.copy()
            zp[i, k] += h
            zm[i, k] -= h
            fd[i, k] = (cross_entropy(q.probs, zp.tolist()) - cross_entropy(q.probs, zm.tolist())) / (2 * h)
    assert np.abs(g - fd).max() / np.abs(fd).max() < 1e-5


def test_gradient_dimension_mismatch():
    with pytest.raises(ValueError):
        kl_gradient(compute_label_distribution(Y3), np.zeros((4, 1)))


def test_loss_matches_oracle():
    rng = np.random.default_rng(2)
    Z = rng.normal(size=(6, 2))
    q = compute_label_distribution(rng.integers(0, 2, (6, 3)))
    assert cross_entropy_loss(q, Z) == pytest.approx(cross_entropy(q.probs, Z.tolist()), rel=1e-12)


def test_default_latent_dim():
    assert [default_latent_dim(k) for k in (1, 2, 5, 6, 14)] == [2, 2, 3, 3, 7]


def test_three_point_example_converges():
    res = optimize_latent(Y3, EncoderConfig(latent_dim=1))
    assert res.trace[-1] < 1e-3
    assert res.iterations <= 5000
    z = res.codes.codes[:, 0]
    d12, d13, d23 = abs(z[0] - z[1]), abs(z[0] - z[2]), abs(z[1] - z[2])
    assert d12 < min(d13, d23)


def test_two_points_stop_immediately():
    res = optimize_latent([[1, 0], [0, 1]])
    assert res.converged
    assert res.iterations == 1
    assert all(abs(v) < 1e-15 for v in res.trace)


def test_deterministic():
    Y = np.random.default_rng(3).integers(0, 2, (30, 5))
    a = optimize_latent(Y, EncoderConfig(seed=9))
    b = optimize_latent(Y, EncoderConfig(seed=9))
    assert a.codes.codes.tobytes() == b.codes.codes.tobytes()
    assert a.trace == b.trace


def test_trace_monotone_by_default():
    Y = np.random.default_rng(5).integers(0, 2, (40, 6))
    res = optimize_latent(Y, EncoderConfig(seed=1))
    assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))
    assert len(res.step_norms) == len(res.trace) - 1 == res.iterations


def test_halving_beta_does_not_add_increases():
    Y = np.random.default_rng(6).integers(0, 2, (25, 4))

    def rises(lr):
        tr = optimize_latent(Y, EncoderConfig(learning_rate=lr, seed=2)).trace
        return sum(b > a for a, b in zip(tr, tr[1:]))

    assert rises(5.0) <= rises(10.0)


def test_permutation_equivariance():
    rng = np.random.default_rng(8)
    Y = rng.integers(0, 2, (12, 4))
    Y[:, 0] = 1
    perm = rng.permutation(12)
    cfg = EncoderConfig(max_iters=60, min_iters=60)
    init = initial_codes(12, 2, 1e-4, 0)
    Qa = compute_label_distribution(Y).probs
    Qb = compute_label_distribution(Y[perm]).probs
    np.testing.assert_array_equal(Qb, Qa[np.ix_(perm, perm)])
    za = optimize_latent(Y, cfg, init=init).codes.codes
    zb = optimize_latent(Y[perm], cfg, init=init[perm]).codes.codes
    np.testing.assert_allclose(zb, za[perm], rtol=1e-7, atol=1e-10)


def test_divergence_raises_with_trace():
    Y = np.random.default_rng(0).integers(0, 2, (10, 3))
    Y[0] = [1, 1, 1]
    Y[1] = [0, 0, 0]
    cfg = EncoderConfig(learning_rate=1e308, rise_tol=None, max_halvings=0, init_scale=1.0)
    with pytest.raises(EncoderDivergenceError) as info:
        optimize_latent(Y, cfg)
    assert len(info.value.trace) == 1 and math.isfinite(info.value.trace[0])


def test_bad_config():
    with pytest.raises(ValueError):
        EncoderConfig(learning_rate=0)
    with pytest.raises(ValueError):
        EncoderConfig(momentum_final=1.0)
    assert EncoderConfig().momentum(249) == 0.5 and EncoderConfig().momentum(250) == 0.8


def test_latent_codes_validation():
    with pytest.raises(ValueError):
        LatentCodes(np.array([[np.inf]]))
    assert LatentCodes(np.zeros((3, 2))).dim == 2
