"""Training loop: MSE plus the variance-alignment penalty, for all gating methods."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import data as dg
from . import gates as gt
from .fim import correlation_matrix
from .network import (AdamState, backward, forward, grad_of_directional,
                      init_network, input_gradient, network_from_payload,
                      network_to_payload, optimizer_step)

METHODS = ("decision_unit", "drop_in", "stochastic", "plain")


class TrainingDivergedError(RuntimeError):
    def __init__(self, step):
        self.step = step
        super().__init__(f"training loss became non-finite at step {step}")


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    method: str = "decision_unit"
    lambda_v: float = 0.1
    lr: float = 3e-3
    lr_final: float = 1e-4  # >0 enables exponential decay of lr to this value
    gate_lr: float = None   # None picks a per-method default
    epochs: int = 1500
    batch_size: int = 128
    seed: int = 0
    hidden: tuple = (64,)
    x0_mode: str = "train_mean"  # or "zero", or "sample" (fresh training row per step)
    stop_grad_g: bool = False
    freeze_alpha_ones: bool = False
    standardize: bool = True
    center_corr: bool = True
    upper_triangular: bool = True
    recompute_c: bool = False
    gate_sigma: float = 1.0
    gate_warmup: int = 0   # epochs with the gate held at its init values
    gate_sgd: bool = False
    dropin_init: float = 1.0
    stochastic_init_mu: float = 0.5

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.lambda_v < 0:
            raise ValueError("lambda_v must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.x0_mode not in ("train_mean", "zero", "sample"):
            raise ValueError(f"unknown x0_mode {self.x0_mode!r}")


@dataclass(frozen=True)
class LossBreakdown:
    mse: float
    var_penalty: float
    total: float


@dataclass
class FittedModel:
    network: object
    method: str
    gate: object            # DecisionUnit | DropInGate | StochasticGate | None
    stats: object           # StandardizeStats | None
    alpha: np.ndarray       # reported scores in [0, 1]
    alpha_forward: np.ndarray  # values actually multiplied into the input
    history: list = field(default_factory=list)
    column_labels: tuple = ()
    lag: int = 0
    config: TrainConfig = None


def variance_penalty(alpha, C, g, var_y):
    """(var_y - g^T diag(alpha) C diag(alpha) g)^2."""
    Cm = C.C if hasattr(C, "C") else np.asarray(C, dtype=float)
    ag = np.asarray(alpha, dtype=float) * np.asarray(g, dtype=float)
    q = float(ag @ Cm @ ag)
    return (var_y - q) ** 2


def penalty_gradients(alpha, C, g, var_y):
    """Analytic gradients of the variance penalty w.r.t. alpha and g."""
    Cm = C.C if hasattr(C, "C") else np.asarray(C, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    g = np.asarray(g, dtype=float)
    ag = alpha * g
    Cag = Cm @ ag
    q = float(ag @ Cag)
    scale = -2.0 * (var_y - q)
    d_alpha = scale * 2.0 * g * Cag
    d_g = scale * 2.0 * alpha * Cag
    return d_alpha, d_g


def _gate_params_flat(method, gate):
    if method == "decision_unit":
        return [gate.W, gate.b]
    if method == "drop_in":
        return [gate.alpha_raw]
    if method == "stochastic":
        return [gate.mu]
    return []


def train(dataset, config):
    """Fit a gated regressor on a (raw) lagged dataset.

    The dataset is standardized internally (population std) unless disabled;
    the stats are stored on the model for test-set reuse.
    """
    stats = None
    work = dataset
    if config.standardize:
        work, stats = dg.standardize(dataset)
    X, y = work.X, work.targets
    n, dim = X.shape
    var_y = float(y.var())
    x0 = X.mean(axis=0) if config.x0_mode == "train_mean" else np.zeros(dim)
    x0_rng = np.random.default_rng([config.seed, 4])

    net = init_network([dim, *config.hidden, 1], seed=config.seed)
    method = config.method
    frozen = config.freeze_alpha_ones or method == "plain"

    C = None
    if method == "decision_unit":
        C = correlation_matrix(X, center=config.center_corr)
    gate = None
    if not frozen:
        if method == "decision_unit":
            gate = gt.init_decision_unit(dim, upper_triangular=config.upper_triangular)
        elif method == "drop_in":
            gate = gt.init_dropin_gate(dim, init_value=config.dropin_init)
        elif method == "stochastic":
            gate = gt.init_stochastic_gate(dim, init_mu=config.stochastic_init_mu,
                                           sigma=config.gate_sigma)

    net_params = [p for layer in net.layers for p in (layer.W, layer.b)]
    net_opt = AdamState(lr=config.lr)
    gate_lr = config.gate_lr
    if gate_lr is None:
        gate_lr = 1e-2 if method == "stochastic" else 1e-3
    gate_params = _gate_params_flat(method, gate) if gate is not None else []
    gate_opt = AdamState(lr=gate_lr, sgd=config.gate_sgd) if gate_params else None

    batch_rng = np.random.default_rng([config.seed, 2])
    eps_rng = np.random.default_rng([config.seed, 3])
    ones = np.ones(dim)
    use_penalty = method == "decision_unit" and config.lambda_v > 0 and not frozen

    history = []
    step = 0
    for epoch in range(config.epochs):
        gate_active = epoch >= config.gate_warmup
        if config.lr_final > 0 and config.epochs > 1:
            frac = epoch / (config.epochs - 1)
            decay = (config.lr_final / config.lr) ** frac
            net_opt.lr = config.lr * decay
            if gate_opt is not None:
                gate_opt.lr = gate_lr * decay
        order = batch_rng.permutation(n)
        sq_err_sum = 0.0
        pen_sum = 0.0
        n_batches = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            Xb, yb = X[idx], y[idx]
            eps = None
            if frozen:
                alpha = ones
            elif method == "stochastic":
                eps = eps_rng.standard_normal(dim)
                alpha = gt.stochastic_forward(gate, eps=eps, training=True)
            elif method == "decision_unit":
                if config.recompute_c:
                    C = correlation_matrix(Xb, center=config.center_corr)
                alpha = gt.decision_forward(gate, C)
            else:
                alpha = gate.alpha_raw
            preds, trace = forward(net, Xb, alpha)
            residuals = yb - preds
            batch_mse = float(residuals @ residuals) / len(idx)
            if not np.isfinite(batch_mse):
                raise TrainingDivergedError(step)
            grads = backward(net, trace, residuals)
            dWs, dbs, d_alpha = grads.dWs, grads.dbs, grads.d_alpha

            pen = 0.0
            if use_penalty:
                if config.x0_mode == "sample":
                    x0 = X[x0_rng.integers(n)]
                g = input_gradient(net, x0, alpha)
                pen = variance_penalty(alpha, C, g, var_y)
                dp_alpha, dp_g = penalty_gradients(alpha, C, g, var_y)
                d_alpha = d_alpha + config.lambda_v * dp_alpha
                if not config.stop_grad_g:
                    dir_grads = grad_of_directional(net, x0, alpha, dp_g)
                    for m in range(len(dWs)):
                        dWs[m] = dWs[m] + config.lambda_v * dir_grads.dWs[m]
                        dbs[m] = dbs[m] + config.lambda_v * dir_grads.dbs[m]
                    d_alpha = d_alpha + config.lambda_v * dir_grads.d_alpha

            flat_net_grads = [g_ for pair in zip(dWs, dbs) for g_ in pair]
            optimizer_step(net_params, flat_net_grads, net_opt)

            if gate_params and gate_active:
                if method == "decision_unit":
                    dW_d, db_d = gt.decision_backward(gate, C, d_alpha)
                    optimizer_step(gate_params, [dW_d, db_d], gate_opt)
                elif method == "drop_in":
                    optimizer_step(gate_params, [d_alpha], gate_opt)
                else:
                    d_mu = gt.stochastic_mu_gradient(gate, eps, d_alpha)
                    optimizer_step(gate_params, [d_mu], gate_opt)

            sq_err_sum += batch_mse * len(idx)
            pen_sum += pen
            n_batches += 1
            step += 1
        mse = sq_err_sum / n
        pen_mean = pen_sum / n_batches
        history.append(LossBreakdown(mse=mse, var_penalty=pen_mean,
                                     total=mse + config.lambda_v * pen_mean))

    alpha_fwd, alpha_rep = _final_alphas(method, gate, C, dim, frozen)
    return FittedModel(network=net, method=method, gate=gate, stats=stats,
                       alpha=alpha_rep, alpha_forward=alpha_fwd, history=history,
                       column_labels=dataset.column_labels, lag=dataset.lag,
                       config=config)


def _final_alphas(method, gate, C, dim, frozen):
    if frozen or gate is None:
        ones = np.ones(dim)
        return ones, ones
    if method == "decision_unit":
        a = gt.decision_forward(gate, C)
        return a, a
    if method == "drop_in":
        return gate.alpha_raw.copy(), gt.dropin_scores(gate)
    a = gt.stochastic_forward(gate, training=False)
    return a, a


def predict(model, X):
    """Deterministic inference-mode predictions in standardized units."""
    preds, _ = forward(model.network, X, model.alpha_forward)
    return preds


def evaluate(model, test):
    """MSE on de-standardized predictions over a raw test dataset."""
    if test.X.shape[1] != model.network.input_dim:
        raise PipelineError(
            f"test set has {test.X.shape[1]} columns, model expects "
            f"{model.network.input_dim}"
        )
    if model.stats is not None:
        work = dg.apply_stats(test, model.stats)
        preds = dg.destandardize_target(predict(model, work.X), model.stats)
    else:
        preds = predict(model, test.X)
    residuals = test.targets - preds
    return float(residuals @ residuals) / len(residuals)


def save_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "mse", "var_penalty", "total"])
        for i, h in enumerate(history):
            w.writerow([i, repr(h.mse), repr(h.var_penalty), repr(h.total)])


def _gate_payload(model):
    if model.gate is None:
        return {"kind": "none"}
    if model.method == "decision_unit":
        return {
            "kind": "decision_unit",
            "upper_triangular": model.gate.upper_triangular,
            "W": [[repr(float(v)) for v in row] for row in model.gate.W],
            "b": [repr(float(v)) for v in model.gate.b],
        }
    if model.method == "drop_in":
        return {"kind": "drop_in",
                "alpha_raw": [repr(float(v)) for v in model.gate.alpha_raw]}
    return {"kind": "stochastic", "sigma": repr(float(model.gate.sigma)),
            "mu": [repr(float(v)) for v in model.gate.mu]}


def save_model(model, path):
    """Single structured-text bundle: network, gate, stats, scores."""
    payload = {
        "method": model.method,
        "lag": model.lag,
        "column_labels": [list(lbl) for lbl in model.column_labels],
        "network": network_to_payload(model.network),
        "gate": _gate_payload(model),
        "alpha": [repr(float(v)) for v in model.alpha],
        "alpha_forward": [repr(float(v)) for v in model.alpha_forward],
        "stats": None if model.stats is None else {
            "x_mean": [repr(float(v)) for v in model.stats.x_mean],
            "x_std": [repr(float(v)) for v in model.stats.x_std],
            "y_mean": repr(model.stats.y_mean),
            "y_std": repr(model.stats.y_std),
        },
        "history": [[repr(h.mse), repr(h.var_penalty), repr(h.total)]
                    for h in model.history],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def load_model(path):
    with open(path) as fh:
        payload = json.load(fh)
    net = network_from_payload(payload["network"])
    gp = payload["gate"]
    gate = None
    if gp["kind"] == "decision_unit":
        gate = gt.DecisionUnit(
            W=np.array([[float(v) for v in row] for row in gp["W"]]),
            b=np.array([float(v) for v in gp["b"]]),
            upper_triangular=gp["upper_triangular"])
    elif gp["kind"] == "drop_in":
        gate = gt.DropInGate(alpha_raw=np.array([float(v) for v in gp["alpha_raw"]]))
    elif gp["kind"] == "stochastic":
        gate = gt.StochasticGate(mu=np.array([float(v) for v in gp["mu"]]),
                                 sigma=float(gp["sigma"]))
    stats = None
    if payload["stats"] is not None:
        sp = payload["stats"]
        stats = dg.StandardizeStats(
            x_mean=np.array([float(v) for v in sp["x_mean"]]),
            x_std=np.array([float(v) for v in sp["x_std"]]),
            y_mean=float(sp["y_mean"]), y_std=float(sp["y_std"]))
    history = [LossBreakdown(mse=float(a), var_penalty=float(b), total=float(c))
               for a, b, c in payload["history"]]
    return FittedModel(
        network=net, method=payload["method"], gate=gate, stats=stats,
        alpha=np.array([float(v) for v in payload["alpha"]]),
        alpha_forward=np.array([float(v) for v in payload["alpha_forward"]]),
        history=history,
        column_labels=tuple(tuple(lbl) for lbl in payload["column_labels"]),
        lag=payload["lag"])
