"""Report emission: Table-style CSV/JSON plus per-cell score files and bar figures."""
from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .data import column_name
from .harness import AggregateResult, CellAggregate, RunResult

REPORT_FIELDS = ("system", "method", "seeds", "mse_mean", "mse_std",
                 "l1_mean", "l1_std", "precision", "recall", "f1")


def _cell_row(cell):
    return {
        "system": cell.system,
        "method": cell.method,
        "seeds": cell.n_seeds,
        "mse_mean": cell.mse_mean,
        "mse_std": cell.mse_std,
        "l1_mean": cell.l1_mean,
        "l1_std": cell.l1_std,
        "precision": cell.precision,
        "recall": cell.recall,
        "f1": cell.f1,
    }


def scores_filename(system, method, ext="csv"):
    return f"scores_{system}_{method}.{ext}"


def emit_report(aggregates, out_dir, formats=("csv", "json"), figures=True):
    """Write the aggregate table and per-cell score files; returns written paths."""
    if not aggregates.cells:
        raise ValueError("nothing to report: no successful cells")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "csv" in formats:
        path = os.path.join(out_dir, "report.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(REPORT_FIELDS)
            for cell in aggregates.cells:
                row = _cell_row(cell)
                w.writerow([row["system"], row["method"], row["seeds"]]
                           + [repr(float(row[k])) for k in REPORT_FIELDS[3:]])
        written.append(path)
    if "json" in formats:
        path = os.path.join(out_dir, "report.json")
        with open(path, "w") as fh:
            json.dump([_cell_row(c) for c in aggregates.cells], fh, indent=1)
        written.append(path)
    for cell in aggregates.cells:
        path = os.path.join(out_dir, scores_filename(cell.system, cell.method))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["column_label", "alpha_mean", "alpha_std"])
            for lbl, m, s in zip(cell.column_labels, cell.alpha_mean, cell.alpha_std):
                w.writerow([column_name(lbl), repr(float(m)), repr(float(s))])
        written.append(path)
        if figures:
            written.append(_score_figure(cell, out_dir))
    return written


def _score_figure(cell, out_dir):
    labels = [column_name(lbl) for lbl in cell.column_labels]
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(max(6, 0.4 * len(labels)), 3.2))
    ax.bar(x, cell.alpha_mean, yerr=cell.alpha_std, capsize=2, color="steelblue")
    ax.axhline(0.5, color="gray", lw=0.8, ls="--")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=90, fontsize=7)
    ax.set_ylabel("relevance score")
    ax.set_title(f"{cell.system} / {cell.method} (n={cell.n_seeds})")
    fig.tight_layout()
    path = os.path.join(out_dir, scores_filename(cell.system, cell.method, "png"))
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def parse_report(out_dir):
    """Rebuild an AggregateResult from the emitted CSV files (exact round-trip)."""
    cells = []
    path = os.path.join(out_dir, "report.csv")
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header) != REPORT_FIELDS:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in r:
            system, method = row[0], row[1]
            labels, means, stds = _parse_scores(
                os.path.join(out_dir, scores_filename(system, method)))
            cells.append(CellAggregate(
                system=system, method=method, n_seeds=int(row[2]),
                mse_mean=float(row[3]), mse_std=float(row[4]),
                l1_mean=float(row[5]), l1_std=float(row[6]),
                precision=float(row[7]), recall=float(row[8]), f1=float(row[9]),
                alpha_mean=means, alpha_std=stds, column_labels=labels))
    return AggregateResult(cells=cells)


def _parse_scores(path):
    labels, means, stds = [], [], []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for name, m, s in r:
            sig, k = name.split("_lag")
            labels.append((sig, int(k)))
            means.append(float(m))
            stds.append(float(s))
    return tuple(labels), np.array(means), np.array(stds)


def save_runs(results, path):
    """Persist per-run results so reports can be re-emitted without re-running."""
    payload = []
    for r in results:
        payload.append({
            "system": r.system,
            "method": r.method,
            "replicate": r.replicate,
            "seed": r.seed,
            "error": r.error,
            "test_mse": repr(float(r.test_mse)),
            "l1": repr(float(r.l1)),
            "support_precision": repr(float(r.support_precision)),
            "support_recall": repr(float(r.support_recall)),
            "support_f1": repr(float(r.support_f1)),
            "alpha": None if r.alpha is None else [repr(float(v)) for v in r.alpha],
            "column_labels": [list(lbl) for lbl in r.column_labels],
        })
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def load_runs(path):
    with open(path) as fh:
        payload = json.load(fh)
    results = []
    for item in payload:
        results.append(RunResult(
            system=item["system"], method=item["method"],
            replicate=item["replicate"], seed=item["seed"],
            test_mse=float(item["test_mse"]), l1=float(item["l1"]),
            support_precision=float(item["support_precision"]),
            support_recall=float(item["support_recall"]),
            support_f1=float(item["support_f1"]),
            alpha=None if item["alpha"] is None
            else np.array([float(v) for v in item["alpha"]]),
            column_labels=tuple(tuple(lbl) for lbl in item["column_labels"]),
            error=item["error"]))
    return results
