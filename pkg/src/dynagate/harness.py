"""Multi-seed benchmark orchestration and CSV ingestion for external series."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import data as dg
from . import gates as gt
from .training import TrainConfig, evaluate, train


class SuiteError(RuntimeError):
    """Every replicate of at least one (system, method) cell failed."""


@dataclass(frozen=True)
class ExperimentSpec:
    systems: tuple
    methods: tuple
    n_seeds: int = 10
    seed: int = 0
    n_train: int = 4000
    n_test: int = 2000
    lag: int = 10
    sim_overrides: tuple = ()    # ((key, value), ...) applied to SimConfig
    train_overrides: tuple = ()  # ((key, value), ...) applied to TrainConfig

    def __post_init__(self):
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be at least 1")
        if not self.systems or not self.methods:
            raise ValueError("systems and methods must be nonempty")


@dataclass
class RunResult:
    system: str
    method: str
    replicate: int
    seed: int
    test_mse: float = float("nan")
    alpha: np.ndarray = None
    l1: float = float("nan")
    support_precision: float = float("nan")
    support_recall: float = float("nan")
    support_f1: float = float("nan")
    column_labels: tuple = ()
    error: str = None

    @property
    def ok(self):
        return self.error is None


@dataclass(frozen=True)
class CellAggregate:
    system: str
    method: str
    n_seeds: int
    mse_mean: float
    mse_std: float
    l1_mean: float
    l1_std: float
    precision: float
    recall: float
    f1: float
    alpha_mean: np.ndarray
    alpha_std: np.ndarray
    column_labels: tuple


@dataclass
class AggregateResult:
    cells: list = field(default_factory=list)


def run_seed_value(base_seed, system, method, replicate):
    """Stable 63-bit per-run seed so every cell replays independently."""
    key = f"{base_seed}|{system}|{method}|{replicate}".encode()
    digest = hashlib.sha256(key).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def support_metrics(recovered, truth, labels):
    """Precision/recall/F1 of an index set against ground-truth (signal, lag) pairs."""
    recovered_labels = {tuple(labels[i]) for i in recovered}
    truth = set(truth)
    tp = len(recovered_labels & truth)
    precision = tp / len(recovered_labels) if recovered_labels else 0.0
    recall = tp / len(truth) if truth else 0.0
    f1 = (2 * precision * recall / (precision + recall)) if (precision + recall) else 0.0
    return precision, recall, f1


def run_single(spec, system, method, replicate):
    seed = run_seed_value(spec.seed, system, method, replicate)
    result = RunResult(system=system, method=method, replicate=replicate, seed=seed)
    try:
        total = spec.n_train + spec.n_test + spec.lag
        sim_kwargs = dict(spec.sim_overrides)
        lo, hi = dg.stable_input_range(system)
        sim_kwargs.setdefault("u_low", lo)
        sim_kwargs.setdefault("u_high", hi)
        cfg = dg.SimConfig(system_id=dg.SystemId(system), n_samples=total,
                           seed=seed, **sim_kwargs)
        pair = dg.generate_series(cfg)
        ds = dg.build_lagged(pair, spec.lag)
        train_ds, test_ds = dg.split_rows(ds, spec.n_train)
        tc = TrainConfig(method=method, seed=seed, **dict(spec.train_overrides))
        model = train(train_ds, tc)
        result.test_mse = evaluate(model, test_ds)
        result.alpha = model.alpha
        result.column_labels = ds.column_labels
        result.l1 = gt.sparsity_l1(model.alpha)
        recovered = gt.threshold_support(model.alpha)
        truth = dg.ground_truth_support(system)
        p, r, f1 = support_metrics(recovered, truth, ds.column_labels)
        result.support_precision = p
        result.support_recall = r
        result.support_f1 = f1
    except Exception as exc:  # fault isolation: one bad run never kills the suite
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def aggregate(results):
    """Seed-ordered deterministic reduce over per-run results."""
    cells = []
    keys = []
    for r in results:
        k = (r.system, r.method)
        if k not in keys:
            keys.append(k)
    for system, method in keys:
        runs = sorted((r for r in results
                       if r.system == system and r.method == method and r.ok),
                      key=lambda r: r.replicate)
        if not runs:
            continue
        mses = np.array([r.test_mse for r in runs])
        l1s = np.array([r.l1 for r in runs])
        alphas = np.stack([r.alpha for r in runs])
        cells.append(CellAggregate(
            system=system, method=method, n_seeds=len(runs),
            mse_mean=float(mses.mean()), mse_std=float(mses.std()),
            l1_mean=float(l1s.mean()), l1_std=float(l1s.std()),
            precision=float(np.mean([r.support_precision for r in runs])),
            recall=float(np.mean([r.support_recall for r in runs])),
            f1=float(np.mean([r.support_f1 for r in runs])),
            alpha_mean=alphas.mean(axis=0), alpha_std=alphas.std(axis=0),
            column_labels=runs[0].column_labels))
    return AggregateResult(cells=cells)


def run_suite(spec):
    """Run every (system, method, replicate) cell; returns (results, aggregate)."""
    results = []
    for system in spec.systems:
        for method in spec.methods:
            for rep in range(spec.n_seeds):
                results.append(run_single(spec, system, method, rep))
    for system in spec.systems:
        for method in spec.methods:
            cell = [r for r in results if r.system == system and r.method == method]
            if cell and not any(r.ok for r in cell):
                raise SuiteError(
                    f"every replicate of cell ({system}, {method}) failed; "
                    f"first error: {cell[0].error}"
                )
    return results, aggregate(results)


def ingest_csv(path, input_column, output_column, n_a=5, n_b=5,
               split_fraction=0.5, standardize=True):
    """Build ARX train/test datasets from an external SISO series CSV.

    Returns (train, test, stats); with standardize=False the stats are None and
    both splits are raw. Training stats are applied to both splits.
    """
    pair = dg.read_series_csv(path, input_column=input_column,
                              output_column=output_column)
    tau = max(n_a, n_b)
    if len(pair) < tau + 2:
        raise dg.InsufficientDataError(
            f"{path}: need at least {tau + 2} rows, got {len(pair)}"
        )
    ds = dg.build_arx(pair.u, pair.y, n_a=n_a, n_b=n_b)
    n_train = int(round(ds.n_rows * split_fraction))
    n_train = min(max(n_train, 1), ds.n_rows - 1)
    train_ds, test_ds = dg.split_rows(ds, n_train)
    if not standardize:
        return train_ds, test_ds, None
    train_std, stats = dg.standardize(train_ds)
    test_std = dg.apply_stats(test_ds, stats)
    return train_std, test_std, stats
