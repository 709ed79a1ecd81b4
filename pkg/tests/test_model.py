import numpy as np
import pytest
from hypothesis import given, strategies as st

from hanatomy import ConfigError, DataError, FormatError, ResourceLimitError
from hanatomy.logistic import ce_gradient, ce_hessian, ce_loss, softmax
from hanatomy.model import (
    MlpModel,
    forward,
    full_hessian_fd,
    init_mlp,
    load_checkpoint,
    logit_jacobian,
    loss_and_grad,
    loss_grad,
    save_checkpoint,
)

from oracles import central_diff


def gauss_newton_dense(model, X):
    J = logit_jacobian(model, X)
    P = softmax(forward(model, X))
    return sum(Ji.T @ ce_hessian(p) @ Ji for Ji, p in zip(J, P)) / len(X)


def test_init_is_deterministic():
    a = init_mlp((4, 8, 3), "relu", seed=3)
    b = init_mlp((4, 8, 3), "relu", seed=3)
    assert np.array_equal(a.params, b.params)
    assert not np.array_equal(a.params, init_mlp((4, 8, 3), "relu", seed=4).params)


def test_parameter_count():
    assert init_mlp((4, 8, 3)).n_params == 4 * 8 + 8 + 8 * 3 + 3 == 67


def test_layout_partitions_parameters():
    m = init_mlp((5, 7, 6, 3))
    end = 0
    for slot in m.layout:
        assert slot.offset == end
        end += int(np.prod(slot.shape))
    assert end == m.n_params


def test_he_variance_and_zero_bias():
    m = init_mlp((100, 100, 2), seed=0)
    W = m.weights(0)
    assert W.size == 10_000
    assert abs(W.var() / (2 / 100) - 1) <= 0.2
    assert np.all(m.bias(0) == 0) and np.all(m.bias(1) == 0)


@pytest.mark.parametrize("sizes,act", [((4, 3), "relu"), ((4, 0, 3), "relu"), ((4, 8, 3), "sigmoid")])
def test_init_rejects_bad_config(sizes, act):
    with pytest.raises(ConfigError):
        init_mlp(sizes, act)


def test_zero_weights_give_zero_logits():
    m = MlpModel((3, 4, 2), "relu", np.zeros(init_mlp((3, 4, 2)).n_params))
    assert np.all(forward(m, [1.0, -2.0, 3.0]) == 0.0)


def test_hand_computed_affine_map():
    # hidden layer is the identity on positive inputs
    W1, b1 = np.eye(2), np.zeros(2)
    W2, b2 = np.array([[1.0, -2.0, 0.5], [3.0, 0.0, -1.0]]), np.array([0.1, 0.2, 0.3])
    m = MlpModel((2, 2, 3), "relu", np.concatenate([W1.ravel(), b1, W2.ravel(), b2]))
    z = forward(m, [2.0, 1.0])
    assert np.allclose(z, [2 + 3 + 0.1, -4 + 0.2, 1 - 1 + 0.3], atol=1e-15)


def test_last_layer_linearity(rng):
    m = init_mlp((4, 6, 3), "tanh", seed=1)
    x = rng.normal(size=4)
    theta = m.params.copy()
    slot_w, slot_b = m.layout[2], m.layout[3]
    theta[slot_w.offset:] *= 2.0
    assert slot_b.offset + 3 == len(theta)
    assert np.allclose(forward(m.with_params(theta), x), 2 * forward(m, x), atol=1e-14)


def test_forward_dimension_mismatch():
    with pytest.raises(DataError):
        forward(init_mlp((4, 5, 3)), np.ones(5))


def test_batch_forward_matches_single(rng):
    m = init_mlp((4, 5, 3), seed=2)
    X = rng.normal(size=(7, 4))
    assert np.allclose(forward(m, X), np.array([forward(m, x) for x in X]), atol=1e-15)


def test_dead_network_jacobian():
    m = init_mlp((4, 6, 3), "relu", seed=0)
    J = logit_jacobian(m, np.zeros(4))
    bias = m.layout[-1]
    support = np.zeros(m.n_params, dtype=bool)
    support[bias.offset:] = True
    assert np.all(J[:, ~support] == 0.0)
    assert np.array_equal(J[:, support], np.eye(3))


@pytest.mark.parametrize("act", ["relu", "tanh"])
def test_jacobian_finite_differences(act, rng):
    m = init_mlp((5, 7, 6, 4), act, seed=9)
    for _ in range(3):
        x = rng.normal(size=5)
        fd = central_diff(lambda th: forward(m.with_params(th), x), m.params, h=1e-6)
        J = logit_jacobian(m, x)
        assert np.linalg.norm(J - fd) <= 1e-5 * np.linalg.norm(J)


def test_tanh_jacobian_continuity(rng):
    m = init_mlp((5, 7, 4), "tanh", seed=4)
    x = rng.normal(size=5)
    J0 = logit_jacobian(m, x)
    J1 = logit_jacobian(m, x + 1e-6 * rng.normal(size=5))
    assert np.linalg.norm(J1 - J0) <= 1e-4 * np.linalg.norm(J0)


def test_zero_gradient_when_prediction_exact():
    m = init_mlp((3, 4, 3), "relu", seed=0)
    theta = m.params.copy()
    w = m.layout[2]
    theta[w.offset:] = 0.0
    theta[m.layout[3].offset] = 800.0
    g = loss_grad(m.with_params(theta), np.ones(3), 0)
    assert np.all(g == 0.0)


def test_gradient_finite_differences(rng):
    m = init_mlp((5, 6, 3), "tanh", seed=2)
    x, y = rng.normal(size=5), 2
    fd = central_diff(lambda th: ce_loss(forward(m.with_params(th), x), y), m.params, h=1e-6)[0]
    g = loss_grad(m, x, y)
    assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(g)


@given(st.integers(0, 2 ** 31), st.sampled_from(["relu", "tanh"]))
def test_gradient_is_chain_rule(seed, act):
    r = np.random.default_rng(seed)
    m = init_mlp((4, 5, 3), act, seed=seed)
    x, y = r.normal(size=4), int(r.integers(3))
    chain = ce_gradient(forward(m, x), y) @ logit_jacobian(m, x)
    assert np.allclose(loss_grad(m, x, y), chain, atol=1e-12, rtol=0)


def test_loss_and_grad_is_batch_mean(rng):
    m = init_mlp((4, 5, 3), seed=1)
    X, y = rng.normal(size=(9, 4)), rng.integers(0, 3, size=9)
    loss, grad = loss_and_grad(m, X, y)
    assert np.isclose(loss, np.mean([ce_loss(forward(m, x), t) for x, t in zip(X, y)]))
    assert np.allclose(grad, loss_grad(m, X, y).mean(axis=0), atol=1e-14)


def analytic_linear_hessian(model, X):
    # logits z_k = x . W[:, k] + b_k, so d z_k / d W[j, k] = x_j and d z_k / d b_k = 1
    d, C = model.layer_sizes
    H = np.zeros((model.n_params, model.n_params))
    for x in X:
        J = np.zeros((C, model.n_params))
        for k in range(C):
            J[k, [j * C + k for j in range(d)]] = x
            J[k, d * C + k] = 1.0
        H += J.T @ ce_hessian(softmax(forward(model, x))) @ J
    return H / len(X)


def test_fd_hessian_linear_two_class(rng):
    d = 3
    m = MlpModel((d, 2), "tanh", rng.normal(size=d * 2 + 2))
    X, y = rng.normal(size=(10, d)), rng.integers(0, 2, size=10)
    H = full_hessian_fd(m, X, y)
    assert np.max(np.abs(H - analytic_linear_hessian(m, X))) <= 1e-6


def test_fd_hessian_symmetry_and_residual(rng):
    m = init_mlp((4, 6, 3), "tanh", seed=3)
    X, y = rng.normal(size=(12, 4)), rng.integers(0, 3, size=12)
    H = full_hessian_fd(m, X, y)
    scale = np.max(np.abs(H))
    assert np.max(np.abs(H - H.T)) <= 1e-6 * scale
    # the Gauss-Newton residual is the (symmetric) second-derivative term
    R = H - gauss_newton_dense(m, X)
    assert np.max(np.abs(R - R.T)) <= 1e-6 * scale


def test_fd_hessian_refuses_large_models():
    m = init_mlp((50, 60, 3))
    with pytest.raises(ResourceLimitError):
        full_hessian_fd(m, np.zeros((1, 50)), [0])


def test_checkpoint_round_trip(tmp_path):
    m = init_mlp((4, 6, 5, 3), "tanh", seed=8)
    path = tmp_path / "m.ckpt"
    save_checkpoint(m, path)
    back = load_checkpoint(path)
    assert back.layer_sizes == m.layer_sizes and back.activation == "tanh"
    assert np.array_equal(back.params, m.params)
    assert path.read_bytes().startswith(b"HANATOMY1")


def test_checkpoint_format_errors(tmp_path):
    m = init_mlp((4, 6, 3))
    good = tmp_path / "m.ckpt"
    save_checkpoint(m, good)
    blob = good.read_bytes()
    for name, data in [("magic", b"NOTMAGIC0" + blob[9:]), ("short", blob[:12]), ("cut", blob[:-8])]:
        bad = tmp_path / name
        bad.write_bytes(data)
        with pytest.raises(FormatError):
            load_checkpoint(bad)
