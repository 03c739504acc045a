"""Command-line entry point: train, eval, perturb, gradcheck.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
diverged (NaN loss); gradcheck returns 1 when any backward rule fails
its finite-difference oracle.

Configuration precedence: command-line flags override the optional
``--config`` file (flat ``key = value`` lines) which overrides built-in
defaults.  The effective configuration is echoed into the run manifest,
and re-running with the manifest's config and seed reproduces the
metrics bit-for-bit in a single-threaded run.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import re
import sys
import time

import numpy as np

from . import data as data_mod
from .errors import (
    ContractError,
    DomainError,
    ParseError,
    ShapeError,
    TrainingDiverged,
)
from .gradcheck import TOLERANCE, run_suite, worst_entry
from .graph import load_adjacency
from .model import load_params, save_params
from .train import (
    TrainConfig,
    evaluate_model,
    perturb_sweep,
    predictions,
    train,
    write_perturb_csv,
)

_DATA_ERRORS = (ParseError, DomainError, ContractError, ShapeError, OSError)


def _load_config_file(path):
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ContractError(
                        f"{path}: line {lineno}: expected 'key = value'"
                    )
                key, _, value = line.partition("=")
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise ContractError(f"cannot read config file: {exc}") from exc
    return values


def _effective(args, file_values, key, default, cast):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in file_values:
        raw = file_values[key]
        return cast(raw) if cast is not None else raw
    return default


def _resolve_seed(args, file_values):
    seed = _effective(args, file_values, "seed", None, int)
    if seed is not None:
        return seed
    env = os.environ.get("A3T_SEED")
    if env is not None:
        return int(env)
    return 0


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(path, payload):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


_SYNTH_RE = re.compile(r"^(\d+)x(\d+)$")


def _load_dataset(parser, args, file_values, seed):
    """Resolve --synth or --graph/--speeds into (graph, raw feature matrix,
    dataset fingerprint list)."""
    synth = _effective(args, file_values, "synth", None, str)
    graph_path = _effective(args, file_values, "graph", None, str)
    speeds_path = _effective(args, file_values, "speeds", None, str)
    if synth:
        match = _SYNTH_RE.match(synth)
        if not match:
            parser.error(f"--synth must look like '10x2000', got {synth!r}")
        n_nodes, n_steps = int(match.group(1)), int(match.group(2))
        graph, fm = data_mod.synth_traffic(n_nodes, n_steps, seed=seed)
        fingerprint = [{"synth": synth, "seed": seed}]
        return graph, fm, fingerprint
    if not graph_path or not speeds_path:
        parser.error("either --synth or both --graph and --speeds are required")
    graph = load_adjacency(graph_path)
    fm = data_mod.load_speed_matrix(speeds_path, n_nodes=graph.n_nodes)
    fingerprint = [
        {"path": graph_path, "sha256": _sha256(graph_path)},
        {"path": speeds_path, "sha256": _sha256(speeds_path)},
    ]
    return graph, fm, fingerprint


def _prepare_windows(fm, history, horizon, train_fraction):
    fm = data_mod.normalize(fm)
    windows = data_mod.make_windows(fm, history, horizon)
    train_ds, test_ds = data_mod.split_train_test(windows, train_fraction)
    return fm, train_ds, test_ds


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(parser, args):
    file_values = _load_config_file(args.config) if args.config else {}
    seed = _resolve_seed(args, file_values)
    out_dir = _effective(args, file_values, "out_dir", "runs", str)
    train_frac = _effective(args, file_values, "train_frac", 0.8, float)

    try:
        config = TrainConfig(
            model_kind=_effective(args, file_values, "model", "a3tgcn", str),
            history_n=_effective(args, file_values, "history", 4, int),
            horizon_t=_effective(args, file_values, "horizon", 1, int),
            learning_rate=_effective(args, file_values, "lr", 0.001, float),
            epochs=_effective(args, file_values, "epochs", 5000, int),
            hidden_units=_effective(args, file_values, "hidden", 64, int),
            lambda_reg=_effective(args, file_values, "lambda_reg", 0.0015, float),
            batch_size=_effective(args, file_values, "batch_size", 32, int),
            seed=seed,
            eval_every=_effective(args, file_values, "eval_every", 10, int),
            scorer_hidden=_effective(args, file_values, "scorer_hidden", 32, int),
        )
    except ContractError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        graph, fm_raw, fingerprint = _load_dataset(parser, args, file_values, seed)
        fm, train_ds, test_ds = _prepare_windows(
            fm_raw, config.history_n, config.horizon_t, train_frac
        )
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3

    os.makedirs(out_dir, exist_ok=True)
    started = time.time()
    try:
        params, history = train(config, graph, train_ds, test_ds, fm.scale_max)
    except TrainingDiverged as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 4

    checkpoint_path = None
    if params is not None:
        checkpoint_path = os.path.join(out_dir, "checkpoint.npz")
        save_params(params, checkpoint_path)
    history_path = os.path.join(out_dir, "history.csv")
    history.write_csv(history_path)

    manifest = {
        "command": "train",
        "config": {
            "model": config.model_kind,
            "history": config.history_n,
            "horizon": config.horizon_t,
            "lr": config.learning_rate,
            "epochs": config.epochs,
            "hidden": config.hidden_units,
            "lambda_reg": config.lambda_reg,
            "batch_size": config.batch_size,
            "eval_every": config.eval_every,
            "scorer_hidden": config.scorer_hidden,
            "train_frac": train_frac,
        },
        "seed": seed,
        "datasets": fingerprint,
        "artifacts": {
            "checkpoint": checkpoint_path,
            "history": history_path,
        },
        "duration_seconds": round(time.time() - started, 3),
    }
    _write_manifest(os.path.join(out_dir, "manifest.json"), manifest)

    if history.rows:
        last = history.rows[-1]
        print(
            f"{config.model_kind}: test rmse "
            f"{last['test_rmse']:.4f}, accuracy "
            + ("n/a" if last["test_accuracy"] is None else f"{last['test_accuracy']:.4f}")
        )
    else:
        print(f"{config.model_kind}: no evaluations (epochs={config.epochs})")
    return 0


def cmd_eval(parser, args):
    file_values = _load_config_file(args.config) if args.config else {}
    seed = _resolve_seed(args, file_values)
    train_frac = _effective(args, file_values, "train_frac", 0.8, float)

    try:
        params = load_params(args.checkpoint)
    except (OSError, KeyError, ValueError) as exc:
        print(f"config error: cannot load checkpoint: {exc}", file=sys.stderr)
        return 2

    try:
        graph, fm_raw, _ = _load_dataset(parser, args, file_values, seed)
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3

    if graph.n_nodes != params.n_nodes:
        print(
            f"config error: checkpoint was trained on {params.n_nodes} nodes "
            f"but the graph has {graph.n_nodes}",
            file=sys.stderr,
        )
        return 2

    try:
        fm, _, test_ds = _prepare_windows(
            fm_raw, params.history, params.horizon, train_frac
        )
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3

    report = evaluate_model(graph, params, test_ds, fm.scale_max)
    for name, value in report.formatted().items():
        print(f"{name}: {value}")

    if args.dump_predictions:
        _, preds = predictions(graph, params, test_ds, fm.scale_max)
        horizon = params.horizon
        with open(args.dump_predictions, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["sample", "step", *[f"node_{i}" for i in range(graph.n_nodes)]]
            )
            for s in range(preds.shape[0]):
                block = preds[s].reshape(graph.n_nodes, horizon)
                for t in range(horizon):
                    writer.writerow([s, t, *block[:, t]])
    return 0


def cmd_perturb(parser, args):
    file_values = _load_config_file(args.config) if args.config else {}
    seed = _resolve_seed(args, file_values)
    train_frac = _effective(args, file_values, "train_frac", 0.8, float)

    try:
        params = load_params(args.checkpoint)
    except (OSError, KeyError, ValueError) as exc:
        print(f"config error: cannot load checkpoint: {exc}", file=sys.stderr)
        return 2

    try:
        graph, fm_raw, _ = _load_dataset(parser, args, file_values, seed)
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3

    if graph.n_nodes != params.n_nodes:
        print(
            f"config error: checkpoint expects {params.n_nodes} nodes, "
            f"graph has {graph.n_nodes}",
            file=sys.stderr,
        )
        return 2

    rows = perturb_sweep(
        graph, params, fm_raw, args.kind, seed,
        params.history, params.horizon, train_frac,
    )
    write_perturb_csv(rows, args.out)
    for row in rows:
        acc = row["accuracy"]
        print(
            f"{args.kind} param={row['param']}: rmse {row['rmse']:.4f}, "
            f"accuracy " + ("n/a" if acc is None else f"{acc:.4f}")
        )
    return 0


def cmd_gradcheck(parser, args):
    results = run_suite(seed=args.seed, trials=args.trials, corrupt_op=args.corrupt_op)
    for name, err in sorted(results["ops"].items()):
        print(f"op {name}: {err:.3e}")
    for name, err in sorted(results["variants"].items()):
        print(f"model {name}: {err:.3e}")
    name, err = worst_entry(results)
    print(f"worst: {name} at {err:.3e} (tolerance {TOLERANCE:.0e})")
    if err >= TOLERANCE:
        print(f"gradient check FAILED on {name}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_data_flags(sub):
    sub.add_argument("--graph", help="adjacency CSV (N x N, no header)")
    sub.add_argument("--speeds", help="speed CSV (M rows x N columns, no header)")
    sub.add_argument("--synth", help="synthetic dataset spec, e.g. 10x2000")
    sub.add_argument("--config", help="flat key = value config file")
    sub.add_argument("--seed", type=int, help="run seed (fallback: A3T_SEED env)")
    sub.add_argument("--train-frac", type=float, dest="train_frac",
                     help="chronological train fraction (default 0.8)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="trafficgcn",
        description="Graph-convolutional traffic speed forecasting toolkit",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p_train = commands.add_parser("train", help="train a forecaster")
    _add_data_flags(p_train)
    p_train.add_argument("--model", choices=["gcn", "gru", "tgcn", "a3tgcn", "ha"])
    p_train.add_argument("--horizon", type=int, help="steps predicted jointly")
    p_train.add_argument("--history", type=int, help="input window length")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--hidden", type=int)
    p_train.add_argument("--batch-size", type=int, dest="batch_size")
    p_train.add_argument("--lambda-reg", type=float, dest="lambda_reg")
    p_train.add_argument("--eval-every", type=int, dest="eval_every")
    p_train.add_argument("--scorer-hidden", type=int, dest="scorer_hidden")
    p_train.add_argument("--out-dir", dest="out_dir")
    p_train.set_defaults(func=cmd_train)

    p_eval = commands.add_parser("eval", help="evaluate a checkpoint")
    _add_data_flags(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--dump-predictions", dest="dump_predictions",
                        help="write test predictions as CSV (timestamp x node)")
    p_eval.set_defaults(func=cmd_eval)

    p_perturb = commands.add_parser("perturb", help="noise-robustness sweep")
    _add_data_flags(p_perturb)
    p_perturb.add_argument("--checkpoint", required=True)
    p_perturb.add_argument("--kind", choices=["gaussian", "poisson"], required=True)
    p_perturb.add_argument("--out", default="perturb.csv")
    p_perturb.set_defaults(func=cmd_perturb)

    p_grad = commands.add_parser("gradcheck", help="finite-difference oracle suite")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--trials", type=int, default=5,
                        help="composites per model variant")
    p_grad.add_argument("--corrupt-op", dest="corrupt_op",
                        help="deliberately corrupt one backward rule (verification)")
    p_grad.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(parser, args)


if __name__ == "__main__":
    sys.exit(main())
