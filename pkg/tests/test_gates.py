"""The three gating mechanisms and score post-processing."""
import csv
import math
import os

import numpy as np
import pytest

from dynagate import gates as gt
from dynagate.fim import correlation_matrix


def test_sigmoid_values_and_stability():
    # oracle: direct formula at moderate arguments
    for z in [-3.0, -0.5, 0.0, 0.5, 3.0]:
        assert abs(gt.sigmoid(z) - 1.0 / (1.0 + math.exp(-z))) < 1e-15
    assert gt.sigmoid(1000.0) == 1.0
    assert gt.sigmoid(-1000.0) == 0.0


def test_decision_features_upper_triangle():
    C = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 6.0]])
    feat = gt.decision_features(C)
    assert np.array_equal(feat, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    assert gt.decision_features(C, upper_triangular=False).shape == (9,)


def test_decision_unit_zero_init_scores_half():
    rng = np.random.default_rng(0)
    C = correlation_matrix(rng.normal(size=(50, 6)))
    unit = gt.init_decision_unit(6)
    assert np.array_equal(gt.decision_forward(unit, C), np.full(6, 0.5))


def test_decision_backward_matches_fd():
    # oracle: central finite differences of upstream . alpha
    rng = np.random.default_rng(1)
    C = correlation_matrix(rng.normal(size=(40, 4)))
    unit = gt.init_decision_unit(4)
    unit.W = rng.normal(scale=0.3, size=unit.W.shape)
    unit.b = rng.normal(scale=0.3, size=unit.b.shape)
    upstream = rng.normal(size=4)

    def obj():
        return float(upstream @ gt.decision_forward(unit, C))

    dW, db = gt.decision_backward(unit, C, upstream)
    h = 1e-6
    for arr, analytic in ((unit.W, dW), (unit.b, db)):
        flat = arr.ravel()
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = obj()
            flat[i] = old - h
            dn = obj()
            flat[i] = old
            assert abs(analytic.ravel()[i] - (up - dn) / (2 * h)) < 1e-7


def test_decision_forward_dimension_check():
    rng = np.random.default_rng(2)
    C = correlation_matrix(rng.normal(size=(30, 5)))
    unit = gt.init_decision_unit(4)
    with pytest.raises(ValueError):
        gt.decision_forward(unit, C)


def test_dropin_scores_are_clipped_raw_is_not():
    gate = gt.DropInGate(alpha_raw=np.array([-0.5, 0.3, 1.7]))
    assert np.array_equal(gt.dropin_scores(gate), [0.0, 0.3, 1.0])
    assert np.array_equal(gate.alpha_raw, [-0.5, 0.3, 1.7])


def test_stochastic_forward_train_and_inference():
    gate = gt.init_stochastic_gate(3, init_mu=0.5, sigma=1.0)
    eps = np.array([-2.0, 0.1, 2.0])
    z = gt.stochastic_forward(gate, eps=eps, training=True)
    assert np.array_equal(z, [0.0, 0.6, 1.0])
    assert np.array_equal(gt.stochastic_forward(gate, training=False),
                          np.full(3, 0.5))


def test_stochastic_straight_through_gradient():
    # gradient passes only where mu + sigma*eps is strictly inside (0, 1)
    gate = gt.init_stochastic_gate(3, init_mu=0.5, sigma=1.0)
    eps = np.array([-2.0, 0.1, 2.0])
    g = gt.stochastic_mu_gradient(gate, eps, np.array([5.0, 5.0, 5.0]))
    assert np.array_equal(g, [0.0, 5.0, 0.0])


def test_stochastic_sigma_positive():
    with pytest.raises(ValueError):
        gt.StochasticGate(mu=np.zeros(2), sigma=0.0)


def test_sparsity_and_threshold():
    scores = np.array([0.9, 0.5, 0.51, 0.1])
    assert gt.sparsity_l1(scores) == pytest.approx(2.01)
    assert gt.threshold_support(scores) == {0, 2}  # strictly above 0.5
    with pytest.raises(ValueError):
        gt.threshold_support(scores, threshold=1.0)


def test_export_scores_csv(tmp_path):
    path = os.path.join(tmp_path, "scores.csv")
    labels = (("u", 2), ("u", 1), ("y", 1))
    gt.export_scores_csv(np.array([0.25, 1.0, 0.0]), labels, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["column_label", "alpha"]
    assert rows[1] == ["u_lag2", "0.25"]
    assert [r[0] for r in rows[1:]] == ["u_lag2", "u_lag1", "y_lag1"]
