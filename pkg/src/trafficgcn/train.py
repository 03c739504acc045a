"""Optimizer, training loop, baselines, and the comparison/perturbation sweeps.

One training run is single-writer over its parameters and owns one tape
per batch; independent runs (different configs or seeds) share nothing
and may execute in parallel threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from .errors import ContractError, TrainingDiverged
from .metrics import MetricsReport, evaluate
from .model import MODEL_KINDS, forward_batch, init_params, loss
from .tensor import GradientTape, Tensor


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one run; defaults follow the reference protocol
    (learning rate 0.001, 5000 epochs, 64 hidden units)."""

    model_kind: str
    history_n: int
    horizon_t: int
    learning_rate: float = 0.001
    epochs: int = 5000
    hidden_units: int = 64
    lambda_reg: float = 0.0015
    batch_size: int = 32
    seed: int = 0
    eval_every: int = 10
    scorer_hidden: int = 32
    gc_dim: int = 1
    per_gate_gc: bool = False
    attn_tanh: bool = False

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ContractError(
                f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}"
            )
        positive = {
            "history_n": self.history_n,
            "horizon_t": self.horizon_t,
            "learning_rate": self.learning_rate,
            "hidden_units": self.hidden_units,
            "batch_size": self.batch_size,
            "eval_every": self.eval_every,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ContractError(f"{name} must be positive, got {value}")
        if self.epochs < 0:
            raise ContractError(f"epochs must be >= 0, got {self.epochs}")
        if self.lambda_reg < 0:
            raise ContractError(f"lambda_reg must be >= 0, got {self.lambda_reg}")


@dataclass
class History:
    """Per-epoch train loss plus metric rows at each evaluation epoch."""

    epoch_losses: list = field(default_factory=list)
    rows: list = field(default_factory=list)

    def add_row(self, epoch, train_loss, report):
        row = {"epoch": epoch, "train_loss": train_loss}
        row.update(
            {
                "test_rmse": report.rmse,
                "test_mae": report.mae,
                "test_accuracy": report.accuracy,
                "test_r2": report.r2,
                "test_var": report.explained_variance,
            }
        )
        self.rows.append(row)

    def write_csv(self, path):
        fields = [
            "epoch", "train_loss", "test_rmse", "test_mae",
            "test_accuracy", "test_r2", "test_var",
        ]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for row in self.rows:
                writer.writerow(
                    {k: ("n/a" if row.get(k) is None else row.get(k)) for k in fields}
                )


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the step counter."""

    m: dict
    v: dict
    t: int = 0

    @classmethod
    def for_params(cls, params):
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.tensors.items()},
            v={k: np.zeros_like(p.data) for k, p in params.tensors.items()},
        )


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected adaptive-moment update; returns new params/state."""
    t = state.t + 1
    new_tensors = {}
    new_m = {}
    new_v = {}
    for name, p in params.tensors.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ContractError(
                f"gradient for {name!r} has shape {g.shape}, expected {p.shape}"
            )
        m = beta1 * state.m[name] + (1 - beta1) * g
        v = beta2 * state.v[name] + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        new_tensors[name] = Tensor(p.data - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m[name] = m
        new_v[name] = v
    return params.with_tensors(new_tensors), AdamState(new_m, new_v, t)


# ---------------------------------------------------------------------------
# baselines and prediction plumbing


def baseline_ha(window, horizon):
    """Historical average: every future step gets the window mean per node."""
    w = window.data if isinstance(window, Tensor) else np.asarray(window, float)
    means = w.mean(axis=1, keepdims=True)
    return Tensor(np.repeat(means, horizon, axis=1))


def _predict_stacked(graph, params, dataset, indices, batch_size):
    """Forward the chosen samples in chunks; returns (truth, preds) arrays
    with one row per sample, flattened over nodes and horizon."""
    n = graph.n_nodes
    horizon = dataset.horizon
    truths = []
    preds = []
    for start in range(0, len(indices), batch_size):
        chunk = indices[start:start + batch_size]
        x = Tensor(dataset.inputs_stacked(chunk))
        y = dataset.targets_stacked(chunk)
        out = forward_batch(graph, params, x, batch=len(chunk))
        truths.append(y.reshape(len(chunk), n * horizon))
        preds.append(out.data.reshape(len(chunk), n * horizon))
    return np.concatenate(truths), np.concatenate(preds)


def _predict_ha(dataset, indices):
    truths = []
    preds = []
    for i in indices:
        window, target = dataset.samples[i]
        guess = baseline_ha(window, dataset.horizon)
        truths.append(target.data.reshape(1, -1))
        preds.append(guess.data.reshape(1, -1))
    return np.concatenate(truths), np.concatenate(preds)


def predictions(graph, params, dataset, scale_max=None, batch_size=64, kind=None):
    """De-normalized (truth, prediction) matrices for a whole dataset."""
    indices = list(range(len(dataset)))
    if (kind or (params.kind if params else None)) == "ha":
        truth, pred = _predict_ha(dataset, indices)
    else:
        truth, pred = _predict_stacked(graph, params, dataset, indices, batch_size)
    if scale_max is not None:
        truth = truth * scale_max
        pred = pred * scale_max
    return truth, pred


def evaluate_model(graph, params, dataset, scale_max=None, batch_size=64, kind=None):
    truth, pred = predictions(graph, params, dataset, scale_max, batch_size, kind)
    return evaluate(truth, pred)


# ---------------------------------------------------------------------------
# training loop


def train(config, graph, train_ds, test_ds, scale_max=None):
    """Mini-batch training with best-checkpoint tracking.

    Returns (params, history): the parameters with the lowest test RMSE
    observed at any evaluation, and the full history (per-epoch train
    losses; metric rows on the evaluation stride, with a final row
    restating the best checkpoint's metrics so the history ends on what
    the checkpoint will reproduce).  model_kind "ha" skips optimization
    and reports the closed-form baseline.
    """
    if config.model_kind == "ha":
        history = History()
        report = evaluate_model(graph, None, test_ds, scale_max, kind="ha")
        history.add_row(0, None, report)
        return None, history

    params = init_params(
        config.model_kind,
        n_nodes=graph.n_nodes,
        history=config.history_n,
        hidden=config.hidden_units,
        horizon=config.horizon_t,
        seed=config.seed,
        scorer_hidden=config.scorer_hidden,
        gc_dim=config.gc_dim,
        per_gate_gc=config.per_gate_gc,
        attn_tanh=config.attn_tanh,
    )
    history = History()
    if config.epochs == 0:
        return params, history

    state = AdamState.for_params(params)
    rng = np.random.default_rng(config.seed)
    indices = np.arange(len(train_ds))
    best_rmse = np.inf
    best_params = params
    best_epoch = 0

    for epoch in range(1, config.epochs + 1):
        rng.shuffle(indices)
        batch_losses = []
        for start in range(0, len(indices), config.batch_size):
            chunk = indices[start:start + config.batch_size]
            x = Tensor(train_ds.inputs_stacked(chunk))
            y = Tensor(train_ds.targets_stacked(chunk))
            with GradientTape() as tape:
                for p in params.tensors.values():
                    tape.watch(p)
                out = forward_batch(graph, params, x, batch=len(chunk))
                batch_loss = loss(y, out, params, config.lambda_reg)
                value = batch_loss.item()
                if not np.isfinite(value):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, "
                        f"batch {start // config.batch_size}"
                    )
                grad_map = tape.gradients(batch_loss)
            grads = {name: grad_map[p] for name, p in params.tensors.items()}
            params, state = adam_step(params, grads, state, config.learning_rate)
            batch_losses.append(value)
        epoch_loss = float(np.mean(batch_losses))
        history.epoch_losses.append(epoch_loss)

        if epoch % config.eval_every == 0 or epoch == config.epochs:
            report = evaluate_model(graph, params, test_ds, scale_max)
            history.add_row(epoch, epoch_loss, report)
            if report.rmse < best_rmse:
                best_rmse = report.rmse
                best_params = params
                best_epoch = epoch

    final = evaluate_model(graph, best_params, test_ds, scale_max)
    history.add_row(best_epoch, history.epoch_losses[-1], final)
    return best_params, history


# ---------------------------------------------------------------------------
# sweeps


def compare_models(configs, graph, feature_matrix, train_fraction=0.8):
    """Train/evaluate each config on the shared (normalized) series.

    Returns one row per config: model kind, horizon, and the final
    metrics.  Windows are rebuilt per (history, horizon) pair so configs
    with different horizons stay comparable on the same series.
    """
    fm = data_mod.normalize(feature_matrix)
    rows = []
    window_cache = {}
    for config in configs:
        key = (config.history_n, config.horizon_t)
        if key not in window_cache:
            ds = data_mod.make_windows(fm, config.history_n, config.horizon_t)
            window_cache[key] = data_mod.split_train_test(ds, train_fraction)
        train_ds, test_ds = window_cache[key]
        params, history = train(config, graph, train_ds, test_ds, fm.scale_max)
        last = history.rows[-1]
        rows.append(
            {
                "model": config.model_kind,
                "horizon": config.horizon_t,
                "rmse": last["test_rmse"],
                "mae": last["test_mae"],
                "accuracy": last["test_accuracy"],
                "r2": last["test_r2"],
                "var": last["test_var"],
            }
        )
    return rows


def write_comparison_csv(rows, path):
    """Pivot to the tabular layout: one row per (horizon, metric), one
    column per model."""
    models = []
    for row in rows:
        if row["model"] not in models:
            models.append(row["model"])
    metrics = ["rmse", "mae", "accuracy", "r2", "var"]
    horizons = sorted({row["horizon"] for row in rows})
    lookup = {(r["horizon"], r["model"]): r for r in rows}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["horizon", "metric", *models])
        for horizon in horizons:
            for metric in metrics:
                line = [horizon, metric]
                for model in models:
                    row = lookup.get((horizon, model))
                    value = row[metric] if row else None
                    line.append("n/a" if value is None else f"{value:.6f}")
                writer.writerow(line)


def perturb_sweep(graph, params, feature_matrix, kind, seed,
                  history_n, horizon_t, train_fraction=0.8):
    """Evaluate a trained model on noise-corrupted copies of the series.

    The whole normalized series is corrupted (inputs and targets move
    together, as when noisy data is collected), re-windowed, and the
    chronological test side evaluated.  Returns one row per grid value.
    """
    grid = data_mod.GAUSSIAN_SIGMAS if kind == "gaussian" else data_mod.POISSON_LAMBDAS
    fm = data_mod.normalize(feature_matrix)
    rows = []
    for value in grid:
        spec = data_mod.NoiseSpec(kind=kind, param=value, seed=seed)
        noisy = data_mod.add_noise(fm, spec)
        ds = data_mod.make_windows(noisy, history_n, horizon_t)
        _, test_ds = data_mod.split_train_test(ds, train_fraction)
        report = evaluate_model(graph, params, test_ds, fm.scale_max)
        row = {"kind": kind, "param": value}
        row.update(report.as_dict())
        rows.append(row)
    return rows


def write_perturb_csv(rows, path):
    fields = ["kind", "param", "rmse", "mae", "accuracy", "r2", "explained_variance"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {k: ("n/a" if row.get(k) is None else row.get(k)) for k in fields}
            )
