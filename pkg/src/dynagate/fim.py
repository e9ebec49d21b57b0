"""Lagged correlation matrix, empirical first-layer FIM, and a Cramér-Rao toy check."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import column_name
from .network import _ACT, forward


class InsufficientSampleError(ValueError):
    pass


class ConditioningError(RuntimeError):
    pass


@dataclass(frozen=True)
class CorrelationMatrix:
    C: np.ndarray

    def __post_init__(self):
        if self.C.ndim != 2 or self.C.shape[0] != self.C.shape[1]:
            raise ValueError("correlation matrix must be square")

    @property
    def dim(self):
        return self.C.shape[0]


@dataclass(frozen=True)
class EmpiricalFIM:
    F: np.ndarray
    n_samples: int


def correlation_matrix(X, center=True):
    """C = (1/N) X~^T X~ with column-mean-centered X~ (centering optional).

    Exactly symmetric by construction; never touches network parameters.
    """
    X = np.asarray(X, dtype=float)
    N = X.shape[0]
    if N < 2:
        raise InsufficientSampleError(f"need at least 2 samples, got {N}")
    Xc = X - X.mean(axis=0) if center else X
    C = (Xc.T @ Xc) / N
    C = 0.5 * (C + C.T)
    return CorrelationMatrix(C=C)


def _residual_deltas(net, trace):
    """Per-sample back-propagated error of the residual (y - yhat) at each layer.

    Returns the first-layer delta, shape N x h; d(residual)/d(yhat) = -1.
    """
    N = trace.raw_input.shape[0]
    G = -np.ones((N, net.output_dim))
    for m in range(len(net.layers) - 1, 0, -1):
        layer = net.layers[m]
        dphi = _ACT[layer.activation][1]
        dZ = G * dphi(trace.activations[m])
        G = dZ @ layer.W
    dphi0 = _ACT[net.layers[0].activation][1]
    return G * dphi0(trace.activations[0])


def first_layer_jacobian(net, trace, i):
    """Jacobian of the residual of sample i w.r.t. the first-layer weights.

    Outer product of the back-propagated first-layer error and the gated input,
    shape h x D; rank at most one for a scalar-output network.
    """
    N = trace.raw_input.shape[0]
    if not 0 <= i < N:
        raise IndexError(f"sample index {i} out of range for batch of {N}")
    deltas = _residual_deltas(net, trace)
    return np.outer(deltas[i], trace.gated_input[i])


def empirical_fim(net, X, y, alpha):
    """F = (1/N) sum_i s_i s_i^T with s_i the residual-weighted first-layer Jacobian."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise InsufficientSampleError("empty batch")
    preds, trace = forward(net, X, alpha)
    residuals = y - preds
    deltas = _residual_deltas(net, trace)  # N x h
    N, h = deltas.shape
    D = X.shape[1]
    # s_i = eps_i * outer(delta_i, gated_x_i), flattened row-major
    S = (residuals[:, None] * deltas)[:, :, None] * trace.gated_input[:, None, :]
    S = S.reshape(N, h * D)
    F = (S.T @ S) / N
    F = 0.5 * (F + F.T)
    return EmpiricalFIM(F=F, n_samples=N)


@dataclass(frozen=True)
class CramerRaoReport:
    empirical_cov: np.ndarray
    predicted_bound: np.ndarray
    n_reps: int
    n_samples: int


def cramer_rao_toy(n_reps, n_samples, sigma, seed, n_features=3):
    """OLS on replicated linear-Gaussian data versus the sigma^2 (X^T X)^-1 bound.

    A validation property, not part of the training path.
    """
    if n_reps < 100:
        raise ValueError("need at least 100 replications for a stable covariance")
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_samples, n_features))
    XtX = X.T @ X
    cond = np.linalg.cond(XtX)
    if not np.isfinite(cond) or cond > 1e12:
        raise ConditioningError("design matrix is numerically singular")
    beta = rng.normal(size=n_features)
    noise = rng.normal(0.0, 1.0, size=(n_reps, n_samples)) * sigma
    Y = X @ beta + noise  # n_reps x n_samples
    # beta_hat per replication, solved against the shared design
    XtX_inv = np.linalg.inv(XtX)
    B = Y @ X @ XtX_inv.T  # n_reps x p
    Bc = B - B.mean(axis=0)
    emp = (Bc.T @ Bc) / n_reps
    bound = sigma**2 * XtX_inv
    return CramerRaoReport(empirical_cov=emp, predicted_bound=bound,
                           n_reps=n_reps, n_samples=n_samples)


def export_correlation_csv(cm, column_labels, path):
    names = [column_name(lbl) for lbl in column_labels]
    if len(names) != cm.dim:
        raise ValueError("labels do not match matrix dimension")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([""] + names)
        for name, row in zip(names, cm.C):
            w.writerow([name] + [repr(float(v)) for v in row])
