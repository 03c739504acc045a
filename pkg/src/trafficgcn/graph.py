"""Road network intake and the symmetric propagation matrix.

The forecaster never sees the raw adjacency A: every spatial mixing step
multiplies by the cached normalization D^(-1/2) (A + I) D^(-1/2), where
D is the degree matrix of A + I.  Adding the self-loop before
normalizing guarantees strictly positive degrees, so the normalization
is always defined.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, ParseError, ShapeError
from .tensor import Tensor


def normalize_adjacency(adjacency):
    """Return the propagation matrix D^(-1/2) (A + I) D^(-1/2).

    ``adjacency`` must be square, finite, non-negative, with a zero
    diagonal; self-loops are added here, never expected in the input.
    """
    a = adjacency.data if isinstance(adjacency, Tensor) else np.asarray(adjacency, float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"adjacency must be square, got {a.shape}")
    if not np.isfinite(a).all():
        raise DomainError("adjacency contains non-finite entries")
    if (a < 0).any():
        i, j = np.argwhere(a < 0)[0]
        raise DomainError(f"adjacency entry ({i}, {j}) is negative")
    if np.diagonal(a).any():
        i = int(np.flatnonzero(np.diagonal(a))[0])
        raise DomainError(
            f"adjacency has a nonzero diagonal at node {i}; "
            "self-loops are added internally and must not appear in the input"
        )
    with_loops = a + np.eye(a.shape[0])
    inv_sqrt_deg = 1.0 / np.sqrt(with_loops.sum(axis=1))
    normalized = with_loops * inv_sqrt_deg[:, None] * inv_sqrt_deg[None, :]
    return Tensor(normalized)


class RoadGraph:
    """Node set plus adjacency and its cached normalization.

    Immutable after construction; shareable across threads.  The
    ``batched(k)`` helper returns kron(I_k, A_hat) so a vertical stack
    of k per-sample node blocks can be propagated with one matrix
    product; results are cached per k.
    """

    def __init__(self, adjacency):
        adjacency = adjacency if isinstance(adjacency, Tensor) else Tensor(adjacency)
        self.adjacency = adjacency
        self.a_hat = normalize_adjacency(adjacency)
        self.n_nodes = adjacency.rows
        self.weighted = bool(
            np.any((adjacency.data != 0) & (adjacency.data != 1))
        )
        self._batched_cache = {1: self.a_hat}

    def batched(self, k):
        cached = self._batched_cache.get(k)
        if cached is None:
            cached = Tensor._wrap(np.kron(np.eye(k), self.a_hat.data))
            self._batched_cache[k] = cached
        return cached

    def __repr__(self):
        kind = "weighted" if self.weighted else "binary"
        return f"RoadGraph(n_nodes={self.n_nodes}, {kind})"


def _parse_numeric_csv(path):
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for r, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ParseError(
                    f"{path}: row {r} has {len(cells)} columns, expected {width}"
                )
            parsed = []
            for c, cell in enumerate(cells, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{path}: row {r}, column {c}: not numeric: {cell.strip()!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise ParseError(f"{path}: file is empty")
    return np.array(rows)


def load_adjacency(path):
    """Load an N x N adjacency CSV (no header) and precompute A_hat.

    The matrix is stored exactly as given; nothing is symmetrized.
    """
    a = _parse_numeric_csv(path)
    if a.shape[0] != a.shape[1]:
        raise ShapeError(
            f"{path}: adjacency must be square, got {a.shape[0]}x{a.shape[1]}"
        )
    if np.isnan(a).any():
        r, c = np.argwhere(np.isnan(a))[0]
        raise DomainError(f"{path}: NaN at row {r + 1}, column {c + 1}")
    if (a < 0).any():
        r, c = np.argwhere(a < 0)[0]
        raise DomainError(f"{path}: negative weight at row {r + 1}, column {c + 1}")
    return RoadGraph(a)
