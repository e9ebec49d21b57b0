"""Command-line interface: generate / bench / train / ingest / report."""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import data as dg
from . import gates as gt
from .harness import ExperimentSpec, SuiteError, ingest_csv, run_suite, support_metrics
from .report import emit_report, load_runs, save_runs
from .harness import aggregate as aggregate_runs
from .training import TrainConfig, evaluate, save_history_csv, save_model, train

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


def _add_common(p):
    p.add_argument("--config", help="JSON file providing defaults for any flag")


def _add_sim_flags(p):
    p.add_argument("--u-low", type=float)
    p.add_argument("--u-high", type=float)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--noise-std", type=float)


def _add_train_flags(p):
    p.add_argument("--method", choices=["decision_unit", "drop_in", "stochastic", "plain"])
    p.add_argument("--lambda-v", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-final", type=float)
    p.add_argument("--gate-lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--hidden", help="comma-separated hidden layer widths")
    p.add_argument("--x0-mode", choices=["train_mean", "zero", "sample"])
    p.add_argument("--stop-grad-g", action="store_true", default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="dynagate",
                                     description="Gated NARX identification benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate a test system and write a series CSV")
    _add_common(p)
    p.add_argument("--system", required=True)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--seed", type=int)
    _add_sim_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench", help="multi-seed benchmark over systems and methods")
    _add_common(p)
    p.add_argument("--systems", help="comma-separated, e.g. F3,F5")
    p.add_argument("--methods", help="comma-separated subset of the three methods")
    p.add_argument("--seeds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--lag", type=int)
    _add_sim_flags(p)
    _add_train_flags(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figures", action="store_true", default=None)

    p = sub.add_parser("train", help="train a single (system, method) cell")
    _add_common(p)
    p.add_argument("--system", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--lag", type=int)
    _add_sim_flags(p)
    _add_train_flags(p)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("ingest", help="train on an external SISO series CSV (ARX path)")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--u-col", default="u")
    p.add_argument("--y-col", default="y")
    p.add_argument("--na", type=int)
    p.add_argument("--nb", type=int)
    p.add_argument("--split", type=float)
    p.add_argument("--seed", type=int)
    _add_train_flags(p)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("report", help="re-emit reports from stored run results")
    _add_common(p)
    p.add_argument("--runs", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=["csv", "json", "both"])
    p.add_argument("--no-figures", action="store_true", default=None)

    return parser


def _load_config(args):
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ValueError("config file must hold a JSON object")
    return cfg


def _get(args, cfg, key, default=None):
    """Command line wins over config file, config file over the default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    return cfg.get(key, default)


_TC_DEFAULTS = TrainConfig()


def _train_config(args, cfg, seed, method=None):
    hidden = _get(args, cfg, "hidden", ",".join(str(h) for h in _TC_DEFAULTS.hidden))
    if isinstance(hidden, str):
        hidden = tuple(int(h) for h in hidden.split(","))
    elif isinstance(hidden, (list, tuple)):
        hidden = tuple(int(h) for h in hidden)
    else:
        hidden = (int(hidden),)
    gate_lr = _get(args, cfg, "gate_lr", _TC_DEFAULTS.gate_lr)
    return TrainConfig(
        method=method or _get(args, cfg, "method", _TC_DEFAULTS.method),
        lambda_v=float(_get(args, cfg, "lambda_v", _TC_DEFAULTS.lambda_v)),
        lr=float(_get(args, cfg, "lr", _TC_DEFAULTS.lr)),
        lr_final=float(_get(args, cfg, "lr_final", _TC_DEFAULTS.lr_final)),
        gate_lr=None if gate_lr is None else float(gate_lr),
        epochs=int(_get(args, cfg, "epochs", _TC_DEFAULTS.epochs)),
        batch_size=int(_get(args, cfg, "batch_size", _TC_DEFAULTS.batch_size)),
        seed=seed,
        hidden=hidden,
        x0_mode=_get(args, cfg, "x0_mode", _TC_DEFAULTS.x0_mode),
        stop_grad_g=bool(_get(args, cfg, "stop_grad_g", _TC_DEFAULTS.stop_grad_g)),
    )


def _sim_overrides(args, cfg):
    out = {}
    for key in ("u_low", "u_high", "burn_in", "noise_std"):
        val = _get(args, cfg, key)
        if val is not None:
            out[key] = val
    return out


def _sim_overrides_with_range(args, cfg, system):
    """Per-system stable input range unless the user pins one explicitly."""
    out = _sim_overrides(args, cfg)
    lo, hi = dg.stable_input_range(system)
    out.setdefault("u_low", lo)
    out.setdefault("u_high", hi)
    return out


def cmd_generate(args):
    cfg = _load_config(args)
    sim = dg.SimConfig(system_id=dg.SystemId(args.system),
                       n_samples=int(_get(args, cfg, "n_samples", 1000)),
                       seed=int(_get(args, cfg, "seed", 0)),
                       **_sim_overrides_with_range(args, cfg, args.system))
    pair = dg.generate_series(sim)
    dg.export_series_csv(pair, args.out)
    print(f"wrote {len(pair)} steps to {args.out}")
    return EXIT_OK


def cmd_bench(args):
    cfg = _load_config(args)
    systems = _get(args, cfg, "systems", "F3")
    methods = _get(args, cfg, "methods", "decision_unit,drop_in,stochastic")
    if isinstance(systems, str):
        systems = systems.split(",")
    if isinstance(methods, str):
        methods = methods.split(",")
    tc = _train_config(args, cfg, seed=0, method="decision_unit")
    overrides = [(k, v) for k, v in [
        ("lambda_v", tc.lambda_v), ("lr", tc.lr), ("lr_final", tc.lr_final),
        ("gate_lr", tc.gate_lr), ("epochs", tc.epochs),
        ("batch_size", tc.batch_size), ("hidden", tc.hidden),
        ("x0_mode", tc.x0_mode), ("stop_grad_g", tc.stop_grad_g)]]
    spec = ExperimentSpec(
        systems=tuple(systems), methods=tuple(methods),
        n_seeds=int(_get(args, cfg, "seeds", 10)),
        seed=int(_get(args, cfg, "seed", 0)),
        n_train=int(_get(args, cfg, "n_train", 4000)),
        n_test=int(_get(args, cfg, "n_test", 2000)),
        lag=int(_get(args, cfg, "lag", 10)),
        sim_overrides=tuple(_sim_overrides(args, cfg).items()),
        train_overrides=tuple(overrides))
    results, agg = run_suite(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    save_runs(results, os.path.join(args.out_dir, "runs.json"))
    emit_report(agg, args.out_dir,
                figures=not bool(_get(args, cfg, "no_figures", False)))
    failures = [r for r in results if not r.ok]
    for r in failures:
        print(f"FAILED {r.system}/{r.method} replicate {r.replicate}: {r.error}",
              file=sys.stderr)
    for cell in agg.cells:
        print(f"{cell.system:>4} {cell.method:<14} mse={cell.mse_mean:.3e} "
              f"l1={cell.l1_mean:.2f} f1={cell.f1:.2f} (n={cell.n_seeds})")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_train(args):
    cfg = _load_config(args)
    seed = int(_get(args, cfg, "seed", 0))
    n_train = int(_get(args, cfg, "n_train", 4000))
    n_test = int(_get(args, cfg, "n_test", 2000))
    lag = int(_get(args, cfg, "lag", 10))
    sim = dg.SimConfig(system_id=dg.SystemId(args.system),
                       n_samples=n_train + n_test + lag, seed=seed,
                       **_sim_overrides_with_range(args, cfg, args.system))
    pair = dg.generate_series(sim)
    ds = dg.build_lagged(pair, lag)
    train_ds, test_ds = dg.split_rows(ds, n_train)
    model = train(train_ds, _train_config(args, cfg, seed=seed))
    mse = evaluate(model, test_ds)
    os.makedirs(args.out_dir, exist_ok=True)
    save_model(model, os.path.join(args.out_dir, "model.json"))
    save_history_csv(model.history, os.path.join(args.out_dir, "history.csv"))
    gt.export_scores_csv(model.alpha, ds.column_labels,
                         os.path.join(args.out_dir, "scores.csv"))
    recovered = gt.threshold_support(model.alpha)
    p, r, f1 = support_metrics(recovered, dg.ground_truth_support(args.system),
                               ds.column_labels)
    print(f"test_mse={mse:.6e} l1={gt.sparsity_l1(model.alpha):.3f} "
          f"precision={p:.2f} recall={r:.2f} f1={f1:.2f}")
    return EXIT_OK


def cmd_ingest(args):
    cfg = _load_config(args)
    seed = int(_get(args, cfg, "seed", 0))
    train_ds, test_ds, _ = ingest_csv(
        args.input, input_column=args.u_col, output_column=args.y_col,
        n_a=int(_get(args, cfg, "na", 5)), n_b=int(_get(args, cfg, "nb", 5)),
        split_fraction=float(_get(args, cfg, "split", 0.5)),
        standardize=False)
    model = train(train_ds, _train_config(args, cfg, seed=seed))
    mse = evaluate(model, test_ds)
    os.makedirs(args.out_dir, exist_ok=True)
    save_model(model, os.path.join(args.out_dir, "model.json"))
    save_history_csv(model.history, os.path.join(args.out_dir, "history.csv"))
    gt.export_scores_csv(model.alpha, train_ds.column_labels,
                         os.path.join(args.out_dir, "scores.csv"))
    print(f"test_mse={mse:.6e} l1={gt.sparsity_l1(model.alpha):.3f}")
    return EXIT_OK


def cmd_report(args):
    cfg = _load_config(args)
    results = load_runs(args.runs)
    agg = aggregate_runs(results)
    fmt = _get(args, cfg, "format", "both")
    formats = ("csv", "json") if fmt == "both" else (fmt,)
    emit_report(agg, args.out_dir, formats=formats,
                figures=not bool(_get(args, cfg, "no_figures", False)))
    print(f"re-emitted {len(agg.cells)} cells to {args.out_dir}")
    return EXIT_PARTIAL if any(not r.ok for r in results) else EXIT_OK


_COMMANDS = {
    "generate": cmd_generate,
    "bench": cmd_bench,
    "train": cmd_train,
    "ingest": cmd_ingest,
    "report": cmd_report,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SuiteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
