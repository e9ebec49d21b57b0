"""Synthetic NARX test systems, lagged regressor construction and standardization."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

DIVERGENCE_LIMIT = 1.0e6

# Longest lag appearing in any generator formula (F10/F11 reach back 10 steps).
MAX_SYSTEM_LAG = 10


class DivergenceError(RuntimeError):
    """A simulated recursion left the admissible range (|y| > limit or domain exit)."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"series diverged at step {step}")


class DegenerateFeatureError(ValueError):
    """A column is constant and cannot be standardized."""


class InsufficientDataError(ValueError):
    """Not enough samples to build the requested lagged windows."""


class SystemId(str, Enum):
    F1 = "F1"
    F2 = "F2"
    F3 = "F3"
    F4 = "F4"
    F5 = "F5"
    F6 = "F6"
    F7 = "F7"
    F8 = "F8"
    F9 = "F9"
    F10 = "F10"
    F11 = "F11"


# Each generator maps accessor functions u(k) = u_{t-k}, y(k) = y_{t-k} to y_t.
_SYSTEMS = {
    SystemId.F1: lambda u, y: math.sin(y(1)) + 0.01 * y(2) + u(4) + u(1) ** 2 + u(2) * u(3),
    SystemId.F2: lambda u, y: 0.01 * y(1) ** 2 + u(1) ** 5 + u(2) * u(3) * u(4) ** 4,
    SystemId.F3: lambda u, y: u(1) ** 2 + u(2) * u(3) * u(4),
    SystemId.F4: lambda u, y: u(3) * u(2) + u(3) * u(1) + u(3) * u(2) * u(1)
    + math.sin(y(2)) + math.exp(-y(1)),
    SystemId.F5: lambda u, y: math.sin(u(1) * u(2)) + math.exp(-y(1) * y(2)),
    SystemId.F6: lambda u, y: math.exp(math.sin(y(1))) + y(3) * math.exp(-u(2)),
    SystemId.F7: lambda u, y: u(5) * math.exp(math.sin(y(1))) + y(3) * math.exp(-u(2)),
    SystemId.F8: lambda u, y: math.exp(u(1) + u(3)) + u(2) * u(4) + 1.0 / (1.0 + y(6) ** 2),
    SystemId.F9: lambda u, y: math.sqrt(math.exp(u(5))) + 1.0 / (1.0 + y(6) ** 2 + u(2) ** 2),
    SystemId.F10: lambda u, y: 2.0 ** (-u(1) * u(2)) * math.sqrt(y(1)) + 0.01 * math.asin(y(10)),
    SystemId.F11: lambda u, y: 0.01 * u(10) * math.atan(y(1) + u(1)) + max(u(2), 0.5)
    + 1.0 / (1.0 + y(5) ** 2 + u(3) ** 2),
}

# Lagged variables appearing in each generator formula.
_SUPPORT = {
    SystemId.F1: {("y", 1), ("y", 2), ("u", 4), ("u", 1), ("u", 2), ("u", 3)},
    SystemId.F2: {("y", 1), ("u", 1), ("u", 2), ("u", 3), ("u", 4)},
    SystemId.F3: {("u", 1), ("u", 2), ("u", 3), ("u", 4)},
    SystemId.F4: {("u", 1), ("u", 2), ("u", 3), ("y", 1), ("y", 2)},
    SystemId.F5: {("u", 1), ("u", 2), ("y", 1), ("y", 2)},
    SystemId.F6: {("y", 1), ("y", 3), ("u", 2)},
    SystemId.F7: {("u", 5), ("u", 2), ("y", 1), ("y", 3)},
    SystemId.F8: {("u", 1), ("u", 2), ("u", 3), ("u", 4), ("y", 6)},
    SystemId.F9: {("u", 5), ("u", 2), ("y", 6)},
    SystemId.F10: {("u", 1), ("u", 2), ("y", 1), ("y", 10)},
    SystemId.F11: {("u", 10), ("u", 1), ("u", 2), ("u", 3), ("y", 1), ("y", 5)},
}


# Input ranges under which each recursion stays bounded over long runs. At the
# default +-2.5 range F2/F4/F5 blow past the divergence guard, and F6/F7 grow
# multiplicatively for any zero-mean input (their y*exp(-u) feedback is a
# zero-drift log random walk); a positive input shift makes them contractive.
STABLE_INPUT_RANGES = {
    SystemId.F2: (-1.0, 1.0),
    SystemId.F4: (-1.0, 1.0),
    SystemId.F5: (-0.5, 0.5),
    SystemId.F6: (0.0, 1.0),
    SystemId.F7: (0.0, 1.0),
}


def stable_input_range(system_id):
    """A default input range for which the system's recursion stays bounded."""
    return STABLE_INPUT_RANGES.get(SystemId(system_id), (-2.5, 2.5))


@dataclass(frozen=True)
class SimConfig:
    system_id: SystemId
    n_samples: int
    u_low: float = -2.5
    u_high: float = 2.5
    burn_in: int = 50
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.u_low >= self.u_high:
            raise ValueError(f"u_low must be < u_high, got [{self.u_low}, {self.u_high}]")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")
        if self.n_samples <= self.burn_in:
            raise ValueError("n_samples must exceed burn_in")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")


@dataclass(frozen=True)
class TimeSeriesPair:
    u: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.y.shape or self.u.ndim != 1:
            raise ValueError("u and y must be 1-d arrays of equal length")
        if not (np.isfinite(self.u).all() and np.isfinite(self.y).all()):
            raise ValueError("series contains non-finite values")

    def __len__(self):
        return len(self.u)


@dataclass(frozen=True)
class LaggedDataset:
    X: np.ndarray
    targets: np.ndarray
    lag: int
    column_labels: tuple  # ((signal, lag), ...) per column

    def __post_init__(self):
        if self.X.shape[0] != self.targets.shape[0]:
            raise ValueError("row count of X must match target length")
        if self.X.shape[1] != len(self.column_labels):
            raise ValueError("column_labels must cover every column")

    @property
    def n_rows(self):
        return self.X.shape[0]

    @property
    def n_cols(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class StandardizeStats:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float


def generate_input(n, u_low, u_high, seed):
    """Draw n i.i.d. samples from Uniform[u_low, u_high]."""
    if n < 1:
        raise ValueError("requested an empty input sequence")
    if u_low >= u_high:
        raise ValueError(f"u_low must be < u_high, got [{u_low}, {u_high}]")
    rng = np.random.default_rng(seed)
    return rng.uniform(u_low, u_high, size=n)


def simulate(config, u):
    """Run the recursion of the configured test system over the input sequence.

    The output history is initialized to zeros; inputs before the start of the
    sequence are taken as zero as well. The first burn_in steps are dropped from
    both sequences.
    """
    total = config.n_samples
    if len(u) < total:
        raise InsufficientDataError(
            f"need at least {total} input samples, got {len(u)}"
        )
    fn = _SYSTEMS[SystemId(config.system_id)]
    pad = MAX_SYSTEM_LAG
    ub = np.zeros(pad + total)
    ub[pad:] = u[:total]
    yb = np.zeros(pad + total)
    if config.noise_std > 0:
        noise_rng = np.random.default_rng([config.seed, 1])
        noise = noise_rng.normal(0.0, config.noise_std, size=total)
    else:
        noise = None
    for i in range(total):
        t = pad + i
        uk = lambda k: ub[t - k]
        yk = lambda k: yb[t - k]
        try:
            val = fn(uk, yk)
        except (ValueError, OverflowError) as exc:
            raise DivergenceError(i, f"recursion left its domain at step {i}: {exc}") from exc
        if noise is not None:
            val += noise[i]
        if not math.isfinite(val) or abs(val) > DIVERGENCE_LIMIT:
            raise DivergenceError(i)
        yb[t] = val
    b = config.burn_in
    return TimeSeriesPair(u=ub[pad + b : pad + total].copy(), y=yb[pad + b : pad + total].copy())


def generate_series(config):
    """generate_input + simulate in one call, both driven by config.seed."""
    u = generate_input(config.n_samples, config.u_low, config.u_high, config.seed)
    return simulate(config, u)


def ground_truth_support(system_id):
    """The set of (signal, lag) pairs appearing in the generator formula."""
    return set(_SUPPORT[SystemId(system_id)])


def build_arx(u, y, n_a, n_b):
    """Lagged regressor matrix [u lags n_b..1, y lags n_a..1] with next-step target."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    tau = max(n_a, n_b)
    T = len(u)
    if T <= tau:
        raise InsufficientDataError(f"series of length {T} cannot support lag {tau}")
    N = T - tau
    cols = []
    labels = []
    for k in range(n_b, 0, -1):
        cols.append(u[tau - k : tau - k + N])
        labels.append(("u", k))
    for k in range(n_a, 0, -1):
        cols.append(y[tau - k : tau - k + N])
        labels.append(("y", k))
    X = np.column_stack(cols)
    return LaggedDataset(X=X, targets=y[tau:].copy(), lag=tau, column_labels=tuple(labels))


def build_lagged(pair, lag):
    """Lag-symmetric regressor: columns [u_{t-lag}..u_{t-1}, y_{t-lag}..y_{t-1}]."""
    return build_arx(pair.u, pair.y, n_a=lag, n_b=lag)


def standardize(dataset):
    """Zero-mean unit-variance columns and targets, population std convention."""
    mean = dataset.X.mean(axis=0)
    std = dataset.X.std(axis=0)  # ddof=0
    bad = np.flatnonzero(std <= 0)
    if bad.size:
        sig, k = dataset.column_labels[bad[0]]
        raise DegenerateFeatureError(f"constant column {sig}_lag{k}")
    y_mean = float(dataset.targets.mean())
    y_std = float(dataset.targets.std())
    if y_std <= 0:
        raise DegenerateFeatureError("constant target")
    stats = StandardizeStats(x_mean=mean, x_std=std, y_mean=y_mean, y_std=y_std)
    return apply_stats(dataset, stats), stats


def apply_stats(dataset, stats):
    X = (dataset.X - stats.x_mean) / stats.x_std
    t = (dataset.targets - stats.y_mean) / stats.y_std
    return replace(dataset, X=X, targets=t)


def destandardize_target(values, stats):
    return np.asarray(values) * stats.y_std + stats.y_mean


def split_rows(dataset, n_train):
    """Contiguous time-ordered split: first n_train rows train, rest test."""
    if not 0 < n_train < dataset.n_rows:
        raise InsufficientDataError(
            f"cannot split {dataset.n_rows} rows into {n_train} training rows"
        )
    train = replace(dataset, X=dataset.X[:n_train], targets=dataset.targets[:n_train])
    test = replace(dataset, X=dataset.X[n_train:], targets=dataset.targets[n_train:])
    return train, test


def column_name(label):
    sig, k = label
    return f"{sig}_lag{k}"


def export_series_csv(pair, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "u", "y"])
        for t, (uv, yv) in enumerate(zip(pair.u, pair.y)):
            w.writerow([t, repr(float(uv)), repr(float(yv))])


def read_series_csv(path, input_column="u", output_column="y"):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None:
            raise InsufficientDataError(f"{path}: empty file")
        try:
            ui = header.index(input_column)
            yi = header.index(output_column)
        except ValueError as exc:
            raise KeyError(
                f"{path}: missing column {exc.args[0].split()[0]!r} "
                f"(have {header})"
            ) from exc
        u, y = [], []
        for row_no, row in enumerate(r, start=2):
            try:
                u.append(float(row[ui]))
                y.append(float(row[yi]))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}: bad value at row {row_no}: {exc}") from exc
    return TimeSeriesPair(u=np.array(u), y=np.array(y))


def export_lagged_csv(dataset, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([column_name(lbl) for lbl in dataset.column_labels] + ["target"])
        for row, tgt in zip(dataset.X, dataset.targets):
            w.writerow([repr(float(v)) for v in row] + [repr(float(tgt))])
