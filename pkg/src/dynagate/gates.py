"""The three relevance-score mechanisms and score post-processing."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import column_name


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def decision_features(C, upper_triangular=True):
    """Flatten a correlation matrix into the decision unit's input vector.

    The default keeps only the upper triangle including the diagonal, which
    loses nothing on a symmetric matrix and halves the parameter count.
    """
    M = C.C if hasattr(C, "C") else np.asarray(C, dtype=float)
    if upper_triangular:
        iu = np.triu_indices(M.shape[0])
        return M[iu]
    return M.ravel()


@dataclass
class DecisionUnit:
    W: np.ndarray  # D x n_features
    b: np.ndarray  # D
    upper_triangular: bool = True

    @property
    def n_scores(self):
        return self.b.shape[0]


def init_decision_unit(n_inputs, upper_triangular=True):
    """Zero init: every score starts at sigmoid(0) = 0.5."""
    n_feat = n_inputs * (n_inputs + 1) // 2 if upper_triangular else n_inputs * n_inputs
    return DecisionUnit(W=np.zeros((n_inputs, n_feat)), b=np.zeros(n_inputs),
                        upper_triangular=upper_triangular)


def decision_forward(unit, C):
    """alpha = sigmoid(W . flatten(C) + b), entries strictly inside (0, 1)."""
    feat = decision_features(C, unit.upper_triangular)
    if feat.shape[0] != unit.W.shape[1]:
        raise ValueError(
            f"correlation features of length {feat.shape[0]} do not match "
            f"decision unit expecting {unit.W.shape[1]}"
        )
    return sigmoid(unit.W @ feat + unit.b)


def decision_backward(unit, C, upstream_grad):
    """Gradients of upstream_grad . alpha w.r.t. the decision-unit parameters."""
    upstream_grad = np.asarray(upstream_grad, dtype=float)
    if upstream_grad.shape != (unit.n_scores,):
        raise ValueError("upstream gradient has the wrong length")
    feat = decision_features(C, unit.upper_triangular)
    alpha = sigmoid(unit.W @ feat + unit.b)
    dz = upstream_grad * alpha * (1.0 - alpha)
    return np.outer(dz, feat), dz


@dataclass
class DropInGate:
    alpha_raw: np.ndarray  # trainable, unconstrained; used raw in the forward pass


def init_dropin_gate(n_inputs, init_value=1.0):
    return DropInGate(alpha_raw=np.full(n_inputs, float(init_value)))


def dropin_scores(gate):
    """Reported scores are the raw gate values clamped to [0, 1]."""
    return np.clip(gate.alpha_raw, 0.0, 1.0)


@dataclass
class StochasticGate:
    mu: np.ndarray          # trainable
    sigma: float = 1.0      # fixed, never updated

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


def init_stochastic_gate(n_inputs, init_mu=0.5, sigma=1.0):
    return StochasticGate(mu=np.full(n_inputs, float(init_mu)), sigma=sigma)


def stochastic_forward(gate, eps=None, training=False):
    """z = clamp(mu + sigma*eps, 0, 1) while training; clamp(mu, 0, 1) at inference."""
    if training:
        eps = np.asarray(eps, dtype=float)
        if eps.shape != gate.mu.shape:
            raise ValueError("eps must match the gate dimension")
        return np.clip(gate.mu + gate.sigma * eps, 0.0, 1.0)
    return np.clip(gate.mu, 0.0, 1.0)


def stochastic_mu_gradient(gate, eps, upstream_grad):
    """Straight-through on the clamp: gradient passes only where the gate is interior."""
    z_pre = gate.mu + gate.sigma * np.asarray(eps, dtype=float)
    interior = (z_pre > 0.0) & (z_pre < 1.0)
    return np.where(interior, np.asarray(upstream_grad, dtype=float), 0.0)


def sparsity_l1(scores):
    """L1 norm of the (unthresholded) relevance scores."""
    return float(np.abs(np.asarray(scores, dtype=float)).sum())


def threshold_support(scores, threshold=0.5):
    """Indices with score strictly above the threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    scores = np.asarray(scores, dtype=float)
    return set(np.flatnonzero(scores > threshold).tolist())


def export_scores_csv(scores, column_labels, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["column_label", "alpha"])
        for lbl, a in zip(column_labels, scores):
            w.writerow([column_name(lbl), repr(float(a))])
