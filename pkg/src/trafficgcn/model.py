"""Forecasting networks: two-layer GCN, GRU, graph-gated recurrent cell,
soft attention over the hidden-state sequence, and the training loss.

All forward functions are pure in (params, inputs).  They operate on a
vertical stack of ``batch`` per-sample node blocks, so the same code
serves the single-sample contracts (batch=1) and mini-batch training;
spatial propagation uses :meth:`RoadGraph.batched`, a block-diagonal
copy of the normalization, keeping the whole batch one matrix product.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError, ShapeError
from .tensor import (
    Tensor,
    add,
    add_bias,
    concat_cols,
    hadamard,
    matmul,
    mean_all,
    mul_colvec,
    relu,
    repeat_rows,
    reshape,
    scale,
    sigmoid,
    slice_cols,
    softmax_rows,
    sub,
    sum_sq,
    tanh,
)

MODEL_KINDS = ("gcn", "gru", "tgcn", "a3tgcn", "ha")

_GATES = ("u", "r", "c")
_BIAS_NAMES = frozenset({"b_u", "b_r", "b_c", "attn_b1", "attn_b2", "out_b"})


def _expected_shapes(kind, n_nodes, history, hidden, horizon,
                     scorer_hidden, gc_dim, per_gate_gc):
    """Shape table for one variant; parameter count is a pure function of it."""
    if kind not in MODEL_KINDS or kind == "ha":
        raise ContractError(f"no parameters exist for model kind {kind!r}")
    if min(n_nodes, history, hidden, horizon) < 1:
        raise ContractError("all model dimensions must be positive")
    if kind == "gcn":
        return {"gcn_w0": (history, hidden), "gcn_w1": (hidden, horizon)}
    feat = 1 if kind == "gru" else gc_dim
    shapes = {}
    if kind in ("tgcn", "a3tgcn"):
        if per_gate_gc:
            for g in _GATES:
                shapes[f"gc_weight_{g}"] = (1, gc_dim)
        else:
            shapes["gc_weight"] = (1, gc_dim)
    for g in _GATES:
        shapes[f"w_{g}"] = (feat + hidden, hidden)
        shapes[f"b_{g}"] = (1, hidden)
    if kind == "a3tgcn":
        shapes["attn_w1"] = (n_nodes * hidden, scorer_hidden)
        shapes["attn_b1"] = (1, scorer_hidden)
        shapes["attn_w2"] = (scorer_hidden, 1)
        shapes["attn_b2"] = (1, 1)
    shapes["out_w"] = (hidden, horizon)
    shapes["out_b"] = (1, horizon)
    return shapes


@dataclass
class HiddenStateSequence:
    """The n recurrent states collected over one input window."""

    states: list

    def __post_init__(self):
        if not self.states:
            raise ContractError("hidden state sequence is empty")

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)


@dataclass
class ModelParams:
    """Every learnable tensor of one model variant, keyed by name.

    The constructor validates the full shape chain once for the given
    (n_nodes, history, hidden, horizon); anything inconsistent fails
    here rather than mid-forward.
    """

    kind: str
    n_nodes: int
    history: int
    hidden: int
    horizon: int
    tensors: dict
    scorer_hidden: int = 32
    gc_dim: int = 1
    per_gate_gc: bool = False
    attn_tanh: bool = False

    def __post_init__(self):
        expected = self._expected_shapes()
        for name, shape in expected.items():
            t = self.tensors.get(name)
            if t is None:
                raise ShapeError(f"{self.kind} params missing tensor {name!r}")
            if t.shape != shape:
                raise ShapeError(
                    f"tensor {name!r} has shape {t.shape}, expected {shape}"
                )
        extra = set(self.tensors) - set(expected)
        if extra:
            raise ShapeError(f"unexpected tensors for kind {self.kind!r}: {sorted(extra)}")

    def _expected_shapes(self):
        return _expected_shapes(
            self.kind, self.n_nodes, self.history, self.hidden, self.horizon,
            self.scorer_hidden, self.gc_dim, self.per_gate_gc,
        )

    def weight_items(self):
        return [(k, v) for k, v in self.tensors.items() if k not in _BIAS_NAMES]

    def bias_items(self):
        return [(k, v) for k, v in self.tensors.items() if k in _BIAS_NAMES]

    def describe(self):
        shapes = {k: v.shape for k, v in self.tensors.items()}
        return {
            "kind": self.kind,
            "shapes": shapes,
            "total": sum(r * c for r, c in shapes.values()),
        }

    def with_tensors(self, tensors):
        return ModelParams(
            kind=self.kind,
            n_nodes=self.n_nodes,
            history=self.history,
            hidden=self.hidden,
            horizon=self.horizon,
            tensors=tensors,
            scorer_hidden=self.scorer_hidden,
            gc_dim=self.gc_dim,
            per_gate_gc=self.per_gate_gc,
            attn_tanh=self.attn_tanh,
        )

    def gc_weight_for(self, gate):
        if self.per_gate_gc:
            return self.tensors[f"gc_weight_{gate}"]
        return self.tensors["gc_weight"]

    def meta(self):
        return {
            "kind": self.kind,
            "n_nodes": self.n_nodes,
            "history": self.history,
            "hidden": self.hidden,
            "horizon": self.horizon,
            "scorer_hidden": self.scorer_hidden,
            "gc_dim": self.gc_dim,
            "per_gate_gc": self.per_gate_gc,
            "attn_tanh": self.attn_tanh,
        }


def init_params(
    kind,
    n_nodes,
    history,
    hidden,
    horizon,
    seed,
    scorer_hidden=32,
    gc_dim=1,
    per_gate_gc=False,
    attn_tanh=False,
):
    """Seeded uniform [-s, s] init with s = 1/sqrt(fan_in); biases zero."""
    rng = np.random.default_rng(seed)
    expected = _expected_shapes(
        kind, n_nodes, history, hidden, horizon, scorer_hidden, gc_dim, per_gate_gc
    )
    tensors = {}
    for name, (rows, cols) in expected.items():
        if name in _BIAS_NAMES:
            tensors[name] = Tensor.zeros(rows, cols)
        else:
            s = 1.0 / np.sqrt(rows)
            tensors[name] = Tensor(rng.uniform(-s, s, size=(rows, cols)))
    return ModelParams(
        kind=kind,
        n_nodes=n_nodes,
        history=history,
        hidden=hidden,
        horizon=horizon,
        tensors=tensors,
        scorer_hidden=scorer_hidden,
        gc_dim=gc_dim,
        per_gate_gc=per_gate_gc,
        attn_tanh=attn_tanh,
    )


def zero_params(kind, n_nodes, history, hidden, horizon, **kwargs):
    """All-zero parameters; handy for the closed-form oracle checks."""
    p = init_params(kind, n_nodes, history, hidden, horizon, seed=0, **kwargs)
    return p.with_tensors({k: Tensor.zeros(*v.shape) for k, v in p.tensors.items()})


# ---------------------------------------------------------------------------
# forward passes


def graph_conv(graph, x, weight):
    """One propagation step A_hat . x . weight."""
    return matmul(matmul(graph.a_hat, x), weight)


def gcn_forward(graph, x, params, batch=1):
    """Two-layer graph convolution with a linear regression head:
    A_hat . ReLU(A_hat . X . W0) . W1  (identity on the output layer)."""
    prop = graph.batched(batch)
    hidden = relu(matmul(matmul(prop, x), params.tensors["gcn_w0"]))
    return matmul(matmul(prop, hidden), params.tensors["gcn_w1"])


def _ones_like(t):
    return Tensor.ones(t.rows, t.cols)


def _cell(feat_ur, feat_c, h_prev, params):
    """Shared gate math: update/reset gates, candidate, convex combination.

    The update gate multiplies the OLD state: h = u * h_prev + (1-u) * c.
    """
    z_in = concat_cols([feat_ur, h_prev])
    u = sigmoid(add_bias(matmul(z_in, params.tensors["w_u"]), params.tensors["b_u"]))
    r = sigmoid(add_bias(matmul(z_in, params.tensors["w_r"]), params.tensors["b_r"]))
    candidate_in = concat_cols([feat_c, hadamard(r, h_prev)])
    c = tanh(add_bias(matmul(candidate_in, params.tensors["w_c"]), params.tensors["b_c"]))
    keep = hadamard(u, h_prev)
    new = hadamard(sub(_ones_like(u), u), c)
    return add(keep, new)


def gru_cell(x_t, h_prev, params):
    """Plain recurrent step on raw node speeds (no spatial mixing)."""
    return _cell(x_t, x_t, h_prev, params)


def _graph_feats(prop, x_t, params):
    """Propagated gate inputs (f_u, f_r, f_c); one shared tensor unless
    per-gate transforms are enabled."""
    gx = matmul(prop, x_t)
    if params.per_gate_gc:
        return tuple(matmul(gx, params.gc_weight_for(g)) for g in _GATES)
    f = matmul(gx, params.tensors["gc_weight"])
    return f, f, f


def tgcn_cell(graph, x_t, h_prev, params):
    """Recurrent step whose input is first propagated over the graph."""
    f_u, f_r, f_c = _graph_feats(graph.a_hat, x_t, params)
    if params.per_gate_gc:
        return _cell_per_gate(f_u, f_r, f_c, h_prev, params)
    return _cell(f_u, f_c, h_prev, params)


def _cell_per_gate(feat_u, feat_r, feat_c, h_prev, params):
    zu = concat_cols([feat_u, h_prev])
    u = sigmoid(add_bias(matmul(zu, params.tensors["w_u"]), params.tensors["b_u"]))
    zr = concat_cols([feat_r, h_prev])
    r = sigmoid(add_bias(matmul(zr, params.tensors["w_r"]), params.tensors["b_r"]))
    candidate_in = concat_cols([feat_c, hadamard(r, h_prev)])
    c = tanh(add_bias(matmul(candidate_in, params.tensors["w_c"]), params.tensors["b_c"]))
    return add(hadamard(u, h_prev), hadamard(sub(_ones_like(u), u), c))


def _sweep(graph, windows, params, batch):
    """Run the recurrent cell over the window columns from h0 = 0.

    ``windows`` is a (batch * N) x n stack, oldest column first.
    Returns the full state sequence (each state (batch * N) x hidden).
    """
    n_rows = windows.rows
    h = Tensor.zeros(n_rows, params.hidden)
    prop = graph.batched(batch) if params.kind in ("tgcn", "a3tgcn") else None
    states = []
    for t in range(windows.cols):
        x_t = slice_cols(windows, t, t + 1)
        if prop is None:
            h = _cell(x_t, x_t, h, params)
        else:
            f_u, f_r, f_c = _graph_feats(prop, x_t, params)
            if params.per_gate_gc:
                h = _cell_per_gate(f_u, f_r, f_c, h, params)
            else:
                h = _cell(f_u, f_c, h, params)
        states.append(h)
    return states


def _attention_core(states, params, batch):
    """Score each state with the two-layer scorer, softmax the scores per
    sample, and sum the states under those weights."""
    n, h = params.n_nodes, params.hidden
    scores = []
    for state in states:
        flat = reshape(state, batch, n * h)
        z = add_bias(matmul(flat, params.tensors["attn_w1"]), params.tensors["attn_b1"])
        if params.attn_tanh:
            z = tanh(z)
        e = add_bias(matmul(z, params.tensors["attn_w2"]), params.tensors["attn_b2"])
        scores.append(e)
    alpha = softmax_rows(concat_cols(scores))
    context = None
    for i, state in enumerate(states):
        weight = repeat_rows(slice_cols(alpha, i, i + 1), n)
        term = mul_colvec(state, weight)
        context = term if context is None else add(context, term)
    return alpha, context


def attention(states, params):
    """Soft attention over one sample's state sequence.

    Returns (alpha: n x 1 weights summing to 1, context: N x H).
    """
    seq = list(states)
    alpha_row, context = _attention_core(seq, params, batch=1)
    return reshape(alpha_row, alpha_row.cols, 1), context


def _head(h_final, params):
    return add_bias(matmul(h_final, params.tensors["out_w"]), params.tensors["out_b"])


def forward_batch(graph, params, windows, batch):
    """Dispatch on model kind; windows is a (batch * N) x n stack."""
    if windows.cols != params.history:
        raise ShapeError(
            f"window has {windows.cols} columns, params expect history {params.history}"
        )
    if windows.rows != batch * params.n_nodes:
        raise ShapeError(
            f"window stack has {windows.rows} rows, expected {batch} x {params.n_nodes}"
        )
    if params.kind == "gcn":
        return gcn_forward(graph, windows, params, batch=batch)
    states = _sweep(graph, windows, params, batch)
    if params.kind == "a3tgcn":
        _, context = _attention_core(states, params, batch)
        return _head(context, params)
    return _head(states[-1], params)


def a3tgcn_forward(graph, window, params):
    """Full pass for one sample: graph-gated sweep, attention, linear head."""
    return forward_batch(graph, params, window, batch=1)


def tgcn_forward(graph, window, params):
    """Graph-gated sweep with a last-state readout (no attention)."""
    return forward_batch(graph, params, window, batch=1)


def gru_forward(graph, window, params):
    return forward_batch(graph, params, window, batch=1)


def loss(y_true, y_pred, params, lambda_reg):
    """Mean squared error plus lambda * sum of squared weight entries.

    Biases are excluded from the penalty.  Returns a 1 x 1 tensor.
    """
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"loss: target {y_true.shape} vs prediction {y_pred.shape}")
    if lambda_reg < 0:
        raise DomainError(f"lambda_reg must be >= 0, got {lambda_reg}")
    diff = sub(y_true, y_pred)
    value = mean_all(hadamard(diff, diff))
    if lambda_reg > 0 and params is not None:
        penalty = None
        for _, w in params.weight_items():
            s = sum_sq(w)
            penalty = s if penalty is None else add(penalty, s)
        if penalty is not None:
            value = add(value, scale(penalty, lambda_reg))
    return value


# ---------------------------------------------------------------------------
# checkpoints


def save_params(params, path):
    """Write a flat name -> matrix archive with a shape manifest.

    float64 matrices round-trip bit-exactly: save then load yields
    identical forward output.
    """
    arrays = {name: t.data for name, t in params.tensors.items()}
    manifest = {
        "meta": params.meta(),
        "tensors": {k: list(v.shape) for k, v in arrays.items()},
    }
    np.savez(path, __manifest__=np.array(json.dumps(manifest)), **arrays)


def load_params(path):
    with np.load(path, allow_pickle=False) as archive:
        manifest = json.loads(str(archive["__manifest__"]))
        tensors = {
            name: Tensor(archive[name]) for name in manifest["tensors"]
        }
    meta = manifest["meta"]
    return ModelParams(
        kind=meta["kind"],
        n_nodes=int(meta["n_nodes"]),
        history=int(meta["history"]),
        hidden=int(meta["hidden"]),
        horizon=int(meta["horizon"]),
        tensors=tensors,
        scorer_hidden=int(meta["scorer_hidden"]),
        gc_dim=int(meta["gc_dim"]),
        per_gate_gc=bool(meta["per_gate_gc"]),
        attn_tanh=bool(meta["attn_tanh"]),
    )
