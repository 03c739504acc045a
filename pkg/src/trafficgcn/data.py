"""Speed-series ingestion, scaling, windowing, noise and a synthetic generator.

The pipeline is: load (or synthesize) a time-by-node speed matrix,
max-scale it into [0, 1], cut sliding windows of n past steps with a
T-step target, and split chronologically.  Metric computation always
happens on de-normalized values, so the recorded ``scale_max`` must
survive alongside the data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError, ParseError
from .graph import RoadGraph, _parse_numeric_csv
from .tensor import Tensor

GAUSSIAN_SIGMAS = (0.2, 0.4, 0.8, 1.0, 2.0)
POISSON_LAMBDAS = (1.0, 2.0, 4.0, 8.0, 16.0)


@dataclass(frozen=True)
class FeatureMatrix:
    """Time-by-node speed observations with scaling metadata.

    ``scale_max`` is None for raw data and holds the divisor after
    :func:`normalize`; ``denormalize`` inverts the scaling for metrics.
    """

    values: Tensor
    scale_max: float | None = None

    @property
    def n_steps(self):
        return self.values.rows

    @property
    def n_nodes(self):
        return self.values.cols

    @property
    def is_normalized(self):
        return self.scale_max is not None

    def denormalize(self, arr):
        if self.scale_max is None:
            return np.asarray(arr, float)
        return np.asarray(arr, float) * self.scale_max


def load_speed_matrix(path, n_nodes=None):
    """Load an M x N speed CSV (row = one timestamp, no header).

    Rejects NaN and negative speeds; when ``n_nodes`` is given (from the
    loaded graph) the column count must match it.
    """
    values = _parse_numeric_csv(path)
    if np.isnan(values).any():
        r, c = np.argwhere(np.isnan(values))[0]
        raise DomainError(f"{path}: NaN speed at row {r + 1}, column {c + 1}")
    if (values < 0).any():
        r, c = np.argwhere(values < 0)[0]
        raise DomainError(f"{path}: negative speed at row {r + 1}, column {c + 1}")
    if n_nodes is not None and values.shape[1] != n_nodes:
        raise ContractError(
            f"{path}: speed matrix has {values.shape[1]} nodes "
            f"but the graph has {n_nodes}"
        )
    return FeatureMatrix(Tensor(values))


def normalize(fm):
    """Divide all entries by the global maximum, recording it for inversion."""
    if fm.is_normalized:
        return fm
    max_value = float(fm.values.data.max())
    if max_value <= 0:
        raise DomainError("cannot normalize an all-zero speed matrix")
    return FeatureMatrix(Tensor(fm.values.data / max_value), scale_max=max_value)


@dataclass(frozen=True)
class WindowedDataset:
    """Sliding-window samples: (input N x n, target N x T), oldest first."""

    samples: list
    history: int
    horizon: int

    def __len__(self):
        return len(self.samples)

    def inputs_stacked(self, indices):
        """Vertically stack the N x n inputs of the chosen samples."""
        return np.concatenate([self.samples[i][0].data for i in indices], axis=0)

    def targets_stacked(self, indices):
        return np.concatenate([self.samples[i][1].data for i in indices], axis=0)


def make_windows(fm, history, horizon):
    """Cut M - n - T + 1 stride-1 windows from an M-step series.

    Sample k reads rows [k, k+n) as the input (transposed to N x n) and
    rows [k+n, k+n+T) as the target (transposed to N x T).
    """
    if history < 1 or horizon < 1:
        raise ContractError("history and horizon must be at least 1")
    m = fm.n_steps
    if m < history + horizon:
        raise ContractError(
            f"series of {m} steps is too short for history {history} + horizon {horizon}"
        )
    raw = fm.values.data
    samples = []
    for k in range(m - history - horizon + 1):
        window = Tensor(raw[k:k + history].T)
        target = Tensor(raw[k + history:k + history + horizon].T)
        samples.append((window, target))
    return WindowedDataset(samples, history, horizon)


def split_train_test(ds, train_fraction):
    """Chronological split: first floor(count * fraction) samples train."""
    if not 0 < train_fraction < 1:
        raise ContractError(f"train_fraction must be in (0, 1), got {train_fraction}")
    cut = int(len(ds) * train_fraction)
    if cut == 0 or cut == len(ds):
        raise ContractError(
            f"split of {len(ds)} samples at fraction {train_fraction} "
            "leaves one side empty"
        )
    train = WindowedDataset(ds.samples[:cut], ds.history, ds.horizon)
    test = WindowedDataset(ds.samples[cut:], ds.history, ds.horizon)
    return train, test


@dataclass(frozen=True)
class NoiseSpec:
    """Perturbation recipe: gaussian sigma or poisson lambda, plus a seed.

    Parameters outside the standard sweep grids must be flagged
    ``custom=True`` so off-grid experiments are deliberate.
    """

    kind: str
    param: float
    seed: int
    custom: bool = False

    def __post_init__(self):
        if self.kind not in ("gaussian", "poisson"):
            raise DomainError(f"unknown noise kind {self.kind!r}")
        if self.param <= 0:
            raise DomainError(f"noise parameter must be positive, got {self.param}")
        grid = GAUSSIAN_SIGMAS if self.kind == "gaussian" else POISSON_LAMBDAS
        if not self.custom and self.param not in grid:
            raise DomainError(
                f"{self.kind} parameter {self.param} is outside the standard grid "
                f"{grid}; pass custom=True to use it anyway"
            )


def _draw_noise(spec, shape):
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "gaussian":
        return rng.normal(0.0, spec.param, size=shape)
    return rng.poisson(spec.param, size=shape).astype(float)


def add_noise(fm, spec):
    """Corrupt a normalized series: draw noise, min-max it into [0, 1],
    add, and re-clip the sum to [0, 1].  Deterministic given the seed."""
    if not fm.is_normalized:
        raise ContractError("add_noise expects a normalized feature matrix")
    noise = _draw_noise(spec, fm.values.shape)
    lo, hi = noise.min(), noise.max()
    if hi > lo:
        noise = (noise - lo) / (hi - lo)
    else:
        noise = np.zeros_like(noise)
    noisy = np.clip(fm.values.data + noise, 0.0, 1.0)
    return FeatureMatrix(Tensor(noisy), scale_max=fm.scale_max)


def ring_with_chords(n_nodes):
    """Ring adjacency plus diameter chords (i, i + n/2); regular for even n."""
    a = np.zeros((n_nodes, n_nodes))
    for i in range(n_nodes):
        a[i, (i + 1) % n_nodes] = 1.0
        a[(i + 1) % n_nodes, i] = 1.0
    half = n_nodes // 2
    for i in range(half):
        j = i + half
        if j < n_nodes and j != i:
            a[i, j] = 1.0
            a[j, i] = 1.0
    np.fill_diagonal(a, 0.0)
    return a


def synth_traffic(
    n_nodes,
    n_steps,
    seed,
    base_speed=50.0,
    amplitude=6.0,
    period=96,
    coupling=0.55,
    noise_std=0.8,
):
    """Generate a ring-with-chords road graph and coupled speed series.

    Each node carries a daily sinusoid (phase staggered around the
    ring, amplitude jittered per node); every step the state relaxes
    toward the A_hat-weighted neighborhood mean with rate ``coupling``
    and picks up small seeded Gaussian noise.  The coupling makes the
    next value depend on neighbors' realized noise, which per-node
    models cannot see: that is the spatial signal the ablations probe.
    """
    if n_nodes < 2:
        raise ContractError(f"need at least 2 nodes, got {n_nodes}")
    if n_steps < 100:
        raise ContractError(f"need at least 100 steps, got {n_steps}")
    graph = RoadGraph(ring_with_chords(n_nodes))
    rng = np.random.default_rng(seed)

    phases = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
    amps = amplitude * (0.7 + 0.6 * rng.random(n_nodes))
    t = np.arange(n_steps)[:, None]
    seasonal = base_speed + amps[None, :] * np.sin(2.0 * np.pi * t / period + phases[None, :])

    a_hat = graph.a_hat.data
    speeds = np.empty((n_steps, n_nodes))
    speeds[0] = seasonal[0]
    for step in range(1, n_steps):
        diffused = a_hat @ speeds[step - 1]
        drift = (1.0 - coupling) * seasonal[step] + coupling * diffused
        speeds[step] = drift + noise_std * rng.standard_normal(n_nodes)
    np.maximum(speeds, 0.0, out=speeds)
    return graph, FeatureMatrix(Tensor(speeds))
