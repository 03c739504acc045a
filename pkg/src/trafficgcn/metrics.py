"""Evaluation metrics for one forecasting run.

All five are computed on de-normalized speeds so reported errors live
on the physical scale.  Degenerate denominators (constant truth for
R2/variance, all-zero truth for accuracy) yield None rather than
infinities; tables print those as "n/a".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensor import Tensor


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    mae: float
    accuracy: float | None
    r2: float | None
    explained_variance: float | None

    def as_dict(self):
        return {
            "rmse": self.rmse,
            "mae": self.mae,
            "accuracy": self.accuracy,
            "r2": self.r2,
            "explained_variance": self.explained_variance,
        }

    def formatted(self):
        def fmt(v):
            return "n/a" if v is None else f"{v:.4f}"

        return {k: fmt(v) for k, v in self.as_dict().items()}


def _as_array(x):
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, float)


def evaluate(y_true, y_pred):
    """Compute RMSE, MAE, Frobenius accuracy, R2 and explained variance.

    Inputs are matched matrices (one row per evaluated sample, columns
    flattened over nodes and horizon steps); all reductions run jointly
    over every entry.
    """
    t = _as_array(y_true)
    p = _as_array(y_pred)
    if t.shape != p.shape:
        raise ShapeError(f"evaluate: shapes differ ({t.shape} vs {p.shape})")
    diff = t - p
    rmse = float(np.sqrt(np.mean(diff ** 2)))
    mae = float(np.mean(np.abs(diff)))

    truth_norm = float(np.linalg.norm(t))
    accuracy = None
    if truth_norm > 0:
        accuracy = 1.0 - float(np.linalg.norm(diff)) / truth_norm

    r2 = None
    explained = None
    centered = t - t.mean()
    ss_tot = float(np.sum(centered ** 2))
    if ss_tot > 0:
        r2 = 1.0 - float(np.sum(diff ** 2)) / ss_tot
    var_truth = float(np.var(t))
    if var_truth > 0:
        explained = 1.0 - float(np.var(diff)) / var_truth

    return MetricsReport(rmse, mae, accuracy, r2, explained)
