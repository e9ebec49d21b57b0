"""Gated MLP: finite-difference gradient oracles, optimizer, checkpointing."""
import os

import numpy as np
import pytest

from dynagate import network as nn


def _loss(net, X, y, alpha):
    preds, _ = nn.forward(net, X, alpha)
    r = y - preds
    return float(r @ r) / len(y)


def _fd(fun, x, h=1e-5):
    """Central finite differences, the oracle for every analytic gradient."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = fun()
        flat[i] = old - h
        dn = fun()
        flat[i] = old
        gf[i] = (up - dn) / (2 * h)
    return g


def _rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-8)
    return np.abs(a - b).max() / denom


@pytest.fixture
def small_problem():
    rng = np.random.default_rng(11)
    net = nn.init_network([5, 6, 4, 1], seed=11)
    X = rng.normal(size=(7, 5))
    y = rng.normal(size=7)
    alpha = rng.uniform(0.1, 0.9, size=5)
    return net, X, y, alpha


def test_param_gradients_match_fd(small_problem):
    net, X, y, alpha = small_problem
    preds, trace = nn.forward(net, X, alpha)
    grads = nn.backward(net, trace, y - preds)
    for m, layer in enumerate(net.layers):
        gW = _fd(lambda: _loss(net, X, y, alpha), layer.W)
        gb = _fd(lambda: _loss(net, X, y, alpha), layer.b)
        assert _rel_err(grads.dWs[m], gW) < 1e-6
        assert _rel_err(grads.dbs[m], gb) < 1e-6


def test_alpha_gradient_matches_fd(small_problem):
    net, X, y, alpha = small_problem
    preds, trace = nn.forward(net, X, alpha)
    grads = nn.backward(net, trace, y - preds)
    g_fd = _fd(lambda: _loss(net, X, y, alpha), alpha)
    assert _rel_err(grads.d_alpha, g_fd) < 1e-6


def test_input_gradient_matches_fd(small_problem):
    net, _, _, alpha = small_problem
    rng = np.random.default_rng(3)
    x0 = rng.normal(size=5)
    g = nn.input_gradient(net, x0, alpha)
    g_fd = _fd(lambda: float(nn.forward(net, x0[None, :], alpha)[0][0]), x0)
    assert _rel_err(g, g_fd) < 1e-6


def test_directional_gradient_matches_fd(small_problem):
    net, _, _, alpha = small_problem
    rng = np.random.default_rng(4)
    x0 = rng.normal(size=5)
    w = rng.normal(size=5)

    def s():
        return float(w @ nn.input_gradient(net, x0, alpha))

    grads = nn.grad_of_directional(net, x0, alpha, w)
    for m, layer in enumerate(net.layers):
        assert _rel_err(grads.dWs[m], _fd(s, layer.W)) < 1e-5
        assert _rel_err(grads.dbs[m], _fd(s, layer.b)) < 1e-5
    assert _rel_err(grads.d_alpha, _fd(s, alpha)) < 1e-5


def test_forward_shape_checks(small_problem):
    net, X, _, alpha = small_problem
    with pytest.raises(nn.ShapeError):
        nn.forward(net, X[:, :4], alpha)
    with pytest.raises(nn.ShapeError):
        nn.forward(net, X, alpha[:4])


def test_regression_head_must_be_linear():
    layer = nn.LayerParams(W=np.ones((1, 3)), b=np.zeros(1), activation="tanh")
    with pytest.raises(ValueError):
        nn.Network(layers=[layer])


def test_init_is_seeded_and_bounded():
    a = nn.init_network([4, 8, 1], seed=5)
    b = nn.init_network([4, 8, 1], seed=5)
    c = nn.init_network([4, 8, 1], seed=6)
    assert np.array_equal(a.layers[0].W, b.layers[0].W)
    assert not np.array_equal(a.layers[0].W, c.layers[0].W)
    assert np.abs(a.layers[0].W).max() <= 1 / np.sqrt(4)


def test_adam_first_step_hand_value():
    # oracle by hand: at t=1 the bias corrections cancel the decay factors, so
    # the update is lr * g / (|g| + eps), i.e. almost exactly lr in magnitude.
    p = np.array([1.0])
    state = nn.AdamState(lr=0.1)
    nn.optimizer_step([p], [np.array([4.0])], state)
    expected = 1.0 - 0.1 * 4.0 / (4.0 + 1e-8)
    assert abs(p[0] - expected) < 1e-12


def test_sgd_step_exact():
    p = np.array([2.0, -1.0])
    state = nn.AdamState(lr=0.5, sgd=True)
    nn.optimizer_step([p], [np.array([1.0, 2.0])], state)
    assert np.array_equal(p, [1.5, -2.0])


def test_optimizer_rejects_non_finite():
    p = np.array([1.0])
    with pytest.raises(nn.NumericalError):
        nn.optimizer_step([p], [np.array([np.nan])], nn.AdamState())


def test_checkpoint_round_trip_bit_exact(tmp_path):
    net = nn.init_network([6, 5, 1], seed=17)
    path = os.path.join(tmp_path, "net.json")
    nn.save_checkpoint(net, path)
    back = nn.load_checkpoint(path)
    for a, b in zip(net.layers, back.layers):
        assert np.array_equal(a.W, b.W)
        assert np.array_equal(a.b, b.b)
        assert a.activation == b.activation
