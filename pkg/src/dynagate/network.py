"""Gated feed-forward regressor with manual backpropagation.

The first layer sees the element-wise product x * alpha; everything downstream
is a plain MLP. All derivatives (parameter gradients, the input gradient, and
the gradient of a directional input derivative) are computed in closed form.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    pass


class TraceError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


def _tanh_d(a):
    return 1.0 - a * a


def _tanh_dd(a):
    # second derivative expressed through the activation value
    return -2.0 * a * (1.0 - a * a)


_ACT = {
    "tanh": (np.tanh, _tanh_d, _tanh_dd),
    "identity": (lambda z: z, lambda a: np.ones_like(a), lambda a: np.zeros_like(a)),
}


@dataclass
class LayerParams:
    W: np.ndarray
    b: np.ndarray
    activation: str

    def __post_init__(self):
        if self.activation not in _ACT:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.W.shape[0] != self.b.shape[0]:
            raise ShapeError("bias length must equal output width")


@dataclass
class Network:
    layers: list

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.W.shape[1] != prev.W.shape[0]:
                raise ShapeError("layer widths are inconsistent")
        if self.layers[-1].activation != "identity":
            raise ValueError("regression head must be linear")

    @property
    def input_dim(self):
        return self.layers[0].W.shape[1]

    @property
    def output_dim(self):
        return self.layers[-1].W.shape[0]


@dataclass
class ForwardTrace:
    gated_input: np.ndarray      # N x D, the x * alpha fed to layer 1
    raw_input: np.ndarray        # N x D
    alpha: np.ndarray
    pre_activations: list        # z_m, each N x h_m
    activations: list            # a_m = phi(z_m)


@dataclass
class ParamGrads:
    dWs: list
    dbs: list
    d_alpha: np.ndarray


def init_network(layer_sizes, seed, hidden_activation="tanh"):
    """Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)], seeded."""
    rng = np.random.default_rng(seed)
    layers = []
    n_layers = len(layer_sizes) - 1
    for m in range(n_layers):
        fan_in = layer_sizes[m]
        bound = 1.0 / np.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(layer_sizes[m + 1], fan_in))
        b = rng.uniform(-bound, bound, size=layer_sizes[m + 1])
        act = "identity" if m == n_layers - 1 else hidden_activation
        layers.append(LayerParams(W=W, b=b, activation=act))
    return Network(layers=layers)


def forward(net, X, alpha):
    """Predictions and a full trace for the batch under gate values alpha."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    alpha = np.asarray(alpha, dtype=float)
    if X.shape[1] != net.input_dim:
        raise ShapeError(f"expected {net.input_dim} input columns, got {X.shape[1]}")
    if alpha.shape != (net.input_dim,):
        raise ShapeError(f"alpha must have length {net.input_dim}")
    a = X * alpha
    gated = a
    pres, acts = [], []
    for layer in net.layers:
        z = a @ layer.W.T + layer.b
        phi = _ACT[layer.activation][0]
        a = phi(z)
        pres.append(z)
        acts.append(a)
    preds = acts[-1][:, 0]
    trace = ForwardTrace(gated_input=gated, raw_input=X, alpha=alpha,
                         pre_activations=pres, activations=acts)
    return preds, trace


def backward(net, trace, residuals):
    """Gradients of (1/N) sum (y - yhat)^2 for every W, b, and for alpha."""
    residuals = np.asarray(residuals, dtype=float)
    N = trace.raw_input.shape[0]
    if residuals.shape != (N,):
        raise TraceError("residuals do not match the traced batch")
    if len(trace.activations) != len(net.layers):
        raise TraceError("trace does not match this network")
    # d loss / d yhat = -2 residual / N
    G = (-2.0 / N) * residuals[:, None]
    dWs = [None] * len(net.layers)
    dbs = [None] * len(net.layers)
    for m in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[m]
        dphi = _ACT[layer.activation][1]
        dZ = G * dphi(trace.activations[m])
        a_prev = trace.gated_input if m == 0 else trace.activations[m - 1]
        if a_prev.shape[1] != layer.W.shape[1]:
            raise TraceError("trace does not match this network")
        dWs[m] = dZ.T @ a_prev
        dbs[m] = dZ.sum(axis=0)
        G = dZ @ layer.W
    # G is now d loss / d (x * alpha)
    d_alpha = (trace.raw_input * G).sum(axis=0)
    return ParamGrads(dWs=dWs, dbs=dbs, d_alpha=d_alpha)


def input_gradient(net, x0, alpha):
    """Exact gradient of the scalar prediction w.r.t. the raw input at x0."""
    x0 = np.asarray(x0, dtype=float)
    _, trace = forward(net, x0[None, :], alpha)
    G = np.ones((1, 1))
    for m in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[m]
        dphi = _ACT[layer.activation][1]
        dZ = G * dphi(trace.activations[m])
        G = dZ @ layer.W
    return (G[0] * trace.alpha).copy()


def grad_of_directional(net, x0, alpha, w):
    """Gradients of the scalar s = w . grad_x f(x0 * alpha) w.r.t. params and alpha.

    Forward-over-reverse: propagate the tangent of a unit input perturbation in
    direction w alongside the primal pass, then run reverse mode over the joint
    computation. Needed to push the variance penalty through g into the network.
    """
    x0 = np.asarray(x0, dtype=float)
    w = np.asarray(w, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    a = x0 * alpha
    ta = w * alpha
    acts, tangents = [], []
    for layer in net.layers:
        z = layer.W @ a + layer.b
        tz = layer.W @ ta
        phi, dphi, _ = _ACT[layer.activation]
        av = phi(z)
        ta = dphi(av) * tz
        a = av
        acts.append(av)
        tangents.append(tz)
    M = len(net.layers)
    ra = np.zeros(net.output_dim)
    rta = np.zeros(net.output_dim)
    rta[0] = 1.0
    dWs = [None] * M
    dbs = [None] * M
    for m in range(M - 1, -1, -1):
        layer = net.layers[m]
        _, dphi, ddphi = _ACT[layer.activation]
        av = acts[m]
        tz = tangents[m]
        d1 = dphi(av)
        rz = d1 * ra + ddphi(av) * tz * rta
        rtz = d1 * rta
        if m == 0:
            a_prev = x0 * alpha
            ta_prev = w * alpha
        else:
            prev = net.layers[m - 1]
            a_prev = acts[m - 1]
            ta_prev = _ACT[prev.activation][1](acts[m - 1]) * tangents[m - 1]
        dWs[m] = np.outer(rz, a_prev) + np.outer(rtz, ta_prev)
        dbs[m] = rz
        ra = layer.W.T @ rz
        rta = layer.W.T @ rtz
    d_alpha = x0 * ra + w * rta
    return ParamGrads(dWs=dWs, dbs=dbs, d_alpha=d_alpha)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    sgd: bool = False
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def _init_slots(self, params):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]


def optimizer_step(params, grads, state):
    """One in-place Adam (or plain SGD) update over a flat parameter list."""
    if len(params) != len(grads):
        raise ShapeError("parameter/gradient list mismatch")
    for g in grads:
        if not np.isfinite(g).all():
            raise NumericalError("non-finite gradient")
    if not state.m:
        state._init_slots(params)
    state.t += 1
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ShapeError("parameter/gradient shape mismatch")
        if state.sgd:
            p -= state.lr * g
            continue
        state.m[i] = state.beta1 * state.m[i] + (1 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1 - state.beta2) * g * g
        m_hat = state.m[i] / (1 - state.beta1 ** state.t)
        v_hat = state.v[i] / (1 - state.beta2 ** state.t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def network_to_payload(net):
    """JSON-ready dict; floats stored via repr so they round-trip bit-exactly."""
    return {
        "layers": [
            {
                "activation": layer.activation,
                "shape": list(layer.W.shape),
                "W": [[repr(float(v)) for v in row] for row in layer.W],
                "b": [repr(float(v)) for v in layer.b],
            }
            for layer in net.layers
        ]
    }


def network_from_payload(payload):
    layers = []
    for item in payload["layers"]:
        W = np.array([[float(v) for v in row] for row in item["W"]])
        b = np.array([float(v) for v in item["b"]])
        layers.append(LayerParams(W=W, b=b, activation=item["activation"]))
    return Network(layers=layers)


def save_checkpoint(net, path):
    """Structured-text checkpoint with a bit-exact write-then-read round-trip."""
    with open(path, "w") as fh:
        json.dump(network_to_payload(net), fh, indent=1)


def load_checkpoint(path):
    with open(path) as fh:
        return network_from_payload(json.load(fh))
