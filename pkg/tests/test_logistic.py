import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from hanatomy import ContractViolation, DataError
from hanatomy.logistic import ce_gradient, ce_hessian, ce_loss, factor_ce_hessian, log_softmax, softmax

from oracles import central_diff, loss_by_normalization

logits = st.integers(2, 8).flatmap(
    lambda C: arrays(np.float64, C, elements=st.floats(-20, 20, allow_nan=False)))


def simplex(rng, C):
    return rng.dirichlet(np.full(C, 0.5))


def test_softmax_uniform():
    assert np.allclose(softmax(np.zeros(4)), 0.25)


def test_softmax_large_logit():
    p = softmax([1000.0, 0.0])
    assert np.all(np.isfinite(p))
    assert abs(p[0] - 1.0) <= 1e-12 and p[1] <= 1e-12


@given(logits, st.floats(-50, 50))
def test_softmax_shift_invariance(z, a):
    assert np.allclose(softmax(z + a), softmax(z), atol=1e-14, rtol=0)


@given(logits)
def test_softmax_is_probability(z):
    p = softmax(z)
    assert np.all(p >= 0) and abs(p.sum() - 1.0) <= 1e-12


def test_softmax_rejects_non_finite():
    with pytest.raises(DataError):
        softmax([0.0, np.inf])


def test_uniform_loss_ln10():
    assert abs(ce_loss(np.zeros(10), 3) - math.log(10)) <= 1e-12
    assert abs(ce_loss(np.zeros(10), 3) - 2.302585093) <= 1e-9


def test_confident_loss_zero():
    assert ce_loss([800.0, 0.0, 0.0], 0) == 0.0


def test_loss_matches_normalization_sum(rng):
    for _ in range(50):
        z = rng.normal(size=5) * 3
        y = int(rng.integers(5))
        assert abs(ce_loss(z, y) - loss_by_normalization(z, y)) <= 1e-12


def test_batched_loss_matches_rows(rng):
    Z = rng.normal(size=(6, 4))
    y = rng.integers(0, 4, size=6)
    assert np.allclose(ce_loss(Z, y), [ce_loss(z, t) for z, t in zip(Z, y)], atol=0)
    assert np.allclose(log_softmax(Z), np.log(softmax(Z)), atol=1e-12)


def test_gradient_uniform_two_class():
    assert np.allclose(ce_gradient(np.zeros(2), 0), [-0.5, 0.5], atol=0)


def test_gradient_zero_when_p_equals_y():
    g = ce_gradient([1000.0, 0.0, 0.0], 0)
    assert np.all(g == 0.0)


@given(logits, st.data())
def test_gradient_sums_to_zero(z, data):
    y = data.draw(st.integers(0, len(z) - 1))
    assert abs(ce_gradient(z, y).sum()) <= 1e-12


def test_gradient_finite_differences(rng):
    for _ in range(20):
        z = rng.normal(size=4)
        y = int(rng.integers(4))
        fd = central_diff(lambda t: ce_loss(t, y), z, h=1e-5)[0]
        g = ce_gradient(z, y)
        assert np.linalg.norm(g - fd) <= 1e-7 * max(np.linalg.norm(g), 1e-3)


def test_batched_gradient_matches_rows(rng):
    Z = rng.normal(size=(5, 3)) * 4
    y = rng.integers(0, 3, size=5)
    assert np.array_equal(ce_gradient(Z, y), np.array([ce_gradient(z, t) for z, t in zip(Z, y)]))


def test_hessian_two_class():
    assert np.allclose(ce_hessian([0.5, 0.5]), [[0.25, -0.25], [-0.25, 0.25]], atol=0)


def test_hessian_uniform_three_class():
    H = ce_hessian(np.full(3, 1 / 3))
    assert np.allclose(np.diag(H), 2 / 9, atol=1e-15)
    assert np.allclose(H[~np.eye(3, dtype=bool)], -1 / 9, atol=1e-15)


def test_hessian_one_hot_is_zero():
    assert np.all(ce_hessian([0.0, 1.0, 0.0]) == 0.0)


def test_hessian_rejects_bad_probabilities():
    with pytest.raises(ContractViolation):
        ce_hessian([0.6, 0.6])
    with pytest.raises(ContractViolation):
        factor_ce_hessian([-0.1, 1.1])


def test_hessian_psd_zero_row_sums(rng):
    for C in (2, 3, 7):
        H = ce_hessian(simplex(rng, C))
        assert np.allclose(H, H.T, atol=0)
        assert np.max(np.abs(H.sum(axis=1))) <= 1e-12
        assert np.linalg.eigvalsh(H).min() >= -1e-15


def test_hessian_finite_differences(rng):
    for _ in range(10):
        z = rng.normal(size=4)
        fd = central_diff(lambda t: ce_gradient(t, 1), z, h=1e-5)
        H = ce_hessian(softmax(z))
        assert np.linalg.norm(H - fd) <= 1e-6 * np.linalg.norm(H)


def test_factor_two_class():
    A = factor_ce_hessian([0.5, 0.5])
    assert np.allclose(A, np.sqrt(0.5) * np.array([[0.5, -0.5], [-0.5, 0.5]]), atol=1e-16)
    assert np.allclose(A.T @ A, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-16)


def test_factor_one_hot():
    A = factor_ce_hessian([0.0, 0.0, 1.0])
    assert np.all(A.T @ A == 0.0)


def test_factor_identity_sweep(rng):
    worst = 0.0
    for _ in range(1000):
        p = simplex(rng, int(rng.integers(2, 11)))
        p = p / p.sum()
        A = factor_ce_hessian(p)
        worst = max(worst, np.max(np.abs(A.T @ A - ce_hessian(p))))
    assert worst <= 1e-12


@given(st.integers(2, 9), st.integers(0, 2 ** 31))
def test_factor_annihilates_constants(C, seed):
    p = np.random.default_rng(seed).dirichlet(np.ones(C))
    p = p / p.sum()
    A = factor_ce_hessian(p)
    # A 1 = 0 and the sqrt(p)-weighted rows sum to zero
    assert np.max(np.abs(A @ np.ones(C))) <= 1e-14
    assert np.max(np.abs(np.sqrt(p) @ A)) <= 1e-14
