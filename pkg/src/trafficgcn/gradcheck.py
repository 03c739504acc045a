"""Finite-difference verification of every backward rule.

Central differences with step 1e-5 are the independent oracle: for a
scalar-valued composition f, each analytic gradient entry must match
(f(x+h) - f(x-h)) / 2h within 1e-4 relative error, with the relative
denominator floored at 1 so near-zero gradients are compared absolutely.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .graph import RoadGraph
from .data import ring_with_chords
from .model import forward_batch, init_params, loss
from .tensor import GradientTape, Tensor

DEFAULT_STEP = 1e-5
TOLERANCE = 1e-4
VARIANTS = ("gcn", "gru", "tgcn", "a3tgcn")


def relative_error(analytic, fd):
    """Max over entries of |analytic - fd| / max(1, |fd|)."""
    analytic = np.asarray(analytic, float)
    fd = np.asarray(fd, float)
    denom = np.maximum(1.0, np.abs(fd))
    return float(np.max(np.abs(analytic - fd) / denom)) if analytic.size else 0.0


def finite_difference(value_fn, arrays, step=DEFAULT_STEP):
    """Central-difference gradient of value_fn(dict name -> array)."""
    grads = {}
    for name, base in arrays.items():
        g = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            bumped = {k: v.copy() for k, v in arrays.items()}
            bumped[name][idx] = base[idx] + step
            up = value_fn(bumped)
            bumped[name][idx] = base[idx] - step
            down = value_fn(bumped)
            g[idx] = (up - down) / (2.0 * step)
        grads[name] = g
    return grads


def check_composition(build_fn, arrays, step=DEFAULT_STEP):
    """Compare tape gradients of build_fn against central differences.

    ``build_fn`` maps a dict of name -> Tensor to a 1 x 1 Tensor and
    must be pure.  Returns the worst relative error over all entries.
    """
    def value(arrs):
        return build_fn({k: Tensor(v) for k, v in arrs.items()}).item()

    tensors = {k: Tensor(v) for k, v in arrays.items()}
    with GradientTape() as tape:
        for t in tensors.values():
            tape.watch(t)
        out = build_fn(tensors)
        grad_map = tape.gradients(out)
    fd = finite_difference(value, arrays, step)
    worst = 0.0
    for name, t in tensors.items():
        worst = max(worst, relative_error(grad_map[t], fd[name]))
    return worst


# ---------------------------------------------------------------------------
# primitive-op compositions

def _away_from_zero(rng, shape, low=0.2, high=1.5):
    # keep ReLU inputs off the kink so the FD oracle stays valid
    signs = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return signs * rng.uniform(low, high, shape)


def _op_compositions(rng):
    a23 = rng.standard_normal((2, 3))
    b34 = rng.standard_normal((3, 4))
    c23 = rng.standard_normal((2, 3))
    w24 = rng.standard_normal((2, 4))
    col = rng.standard_normal((3, 1))
    bias = rng.standard_normal((1, 3))
    kink_free = _away_from_zero(rng, (2, 3))

    return {
        "matmul": (
            lambda t: T.sum_all(T.matmul(t["a"], t["b"])),
            {"a": a23, "b": b34},
        ),
        "add": (
            lambda t: T.sum_all(T.hadamard(T.add(t["a"], t["b"]), t["a"])),
            {"a": a23, "b": c23},
        ),
        "sub": (
            lambda t: T.sum_all(T.hadamard(T.sub(t["a"], t["b"]), t["b"])),
            {"a": a23, "b": c23},
        ),
        "hadamard": (
            lambda t: T.sum_all(T.hadamard(t["a"], t["b"])),
            {"a": a23, "b": c23},
        ),
        "sigmoid": (
            lambda t: T.sum_all(T.hadamard(T.sigmoid(t["a"]), t["w"])),
            {"a": a23, "w": c23},
        ),
        "tanh": (
            lambda t: T.sum_all(T.hadamard(T.tanh(t["a"]), t["w"])),
            {"a": a23, "w": c23},
        ),
        "relu": (
            lambda t: T.sum_all(T.hadamard(T.relu(t["a"]), t["w"])),
            {"a": kink_free, "w": c23},
        ),
        "softmax_vector": (
            lambda t: T.sum_all(T.hadamard(T.softmax_vector(t["e"]), t["w"])),
            {"e": rng.standard_normal((4, 1)), "w": rng.standard_normal((4, 1))},
        ),
        "softmax_rows": (
            lambda t: T.sum_all(T.hadamard(T.softmax_rows(t["e"]), t["w"])),
            {"e": rng.standard_normal((3, 4)), "w": rng.standard_normal((3, 4))},
        ),
        "concat_cols": (
            lambda t: T.sum_all(
                T.hadamard(T.concat_cols([t["a"], t["b"]]), t["w"])
            ),
            {"a": a23, "b": rng.standard_normal((2, 1)), "w": w24},
        ),
        "slice_cols": (
            lambda t: T.sum_all(T.hadamard(T.slice_cols(t["a"], 1, 3), t["w"])),
            {"a": rng.standard_normal((2, 4)), "w": rng.standard_normal((2, 2))},
        ),
        "reshape": (
            lambda t: T.sum_all(T.hadamard(T.reshape(t["a"], 3, 2), t["w"])),
            {"a": a23, "w": rng.standard_normal((3, 2))},
        ),
        "repeat_rows": (
            lambda t: T.sum_all(T.hadamard(T.repeat_rows(t["v"], 2), t["w"])),
            {"v": col, "w": rng.standard_normal((6, 1))},
        ),
        "add_bias": (
            lambda t: T.sum_all(T.hadamard(T.add_bias(t["a"], t["b"]), t["w"])),
            {"a": a23, "b": bias, "w": c23},
        ),
        "mul_colvec": (
            lambda t: T.sum_all(T.mul_colvec(t["a"], t["v"])),
            {"a": rng.standard_normal((3, 2)), "v": col},
        ),
        "scale": (
            lambda t: T.sum_all(T.scale(t["a"], 1.7)),
            {"a": a23},
        ),
        "sum_all": (
            lambda t: T.sum_all(t["a"]),
            {"a": a23},
        ),
    }


def check_primitives(seed=0):
    """Worst relative error per primitive op."""
    rng = np.random.default_rng(seed)
    return {
        name: check_composition(fn, arrays)
        for name, (fn, arrays) in _op_compositions(rng).items()
    }


def random_composition_error(seed):
    """One random multi-op composition; returns its worst relative error.

    Cycles through a library of templates with seed-driven shapes and
    values so repeated calls sweep the op set in varied combinations.
    """
    rng = np.random.default_rng(seed)
    rows = int(rng.integers(2, 7))
    inner = int(rng.integers(2, 7))
    cols = int(rng.integers(1, 7))
    template = seed % 5

    if template == 0:
        arrays = {
            "a": rng.standard_normal((rows, inner)),
            "b": rng.standard_normal((inner, cols)),
            "bias": rng.standard_normal((1, cols)),
            "w": rng.standard_normal((rows, cols)),
        }
        fn = lambda t: T.sum_all(
            T.hadamard(T.sigmoid(T.add_bias(T.matmul(t["a"], t["b"]), t["bias"])), t["w"])
        )
    elif template == 1:
        arrays = {
            "a": rng.standard_normal((rows, inner)),
            "b": rng.standard_normal((rows, inner)),
            "w": rng.standard_normal((2 * inner, cols)),
        }
        fn = lambda t: T.sum_all(
            T.tanh(T.matmul(T.concat_cols([t["a"], t["b"]]), t["w"]))
        )
    elif template == 2:
        arrays = {
            "e": rng.standard_normal((rows, inner)),
            "w": rng.standard_normal((rows, inner)),
            "p": rng.standard_normal((inner, 1)),
        }
        fn = lambda t: T.add(
            T.sum_all(T.hadamard(T.softmax_rows(t["e"]), t["w"])),
            T.scale(T.sum_sq(t["p"]), 0.5),
        )
    elif template == 3:
        arrays = {
            "a": _away_from_zero(rng, (rows, inner)),
            "b": rng.standard_normal((rows, inner)),
            "c": rng.standard_normal((inner, cols)),
        }
        fn = lambda t: T.mean_all(
            T.matmul(T.relu(T.sub(t["a"], t["b"])), t["c"])
        )
    else:
        arrays = {
            "h": rng.standard_normal((rows * 2, inner)),
            "v": rng.standard_normal((rows, 1)),
        }
        fn = lambda t: T.sum_all(
            T.mul_colvec(t["h"], T.repeat_rows(T.softmax_vector(t["v"]), 2))
        )
    return check_composition(fn, arrays)


# ---------------------------------------------------------------------------
# full-model compositions


def variant_error(kind, seed, lambda_reg=0.01):
    """Worst relative error of d(loss)/d(params) for one model variant
    at tiny shapes (N <= 5, n <= 4, H <= 6, T <= 2)."""
    rng = np.random.default_rng(seed)
    n_nodes = int(rng.integers(2, 6))
    history = int(rng.integers(2, 5))
    hidden = int(rng.integers(2, 7))
    horizon = int(rng.integers(1, 3))
    graph = RoadGraph(ring_with_chords(n_nodes))
    window = rng.uniform(0.0, 1.0, (n_nodes, history))
    target = rng.uniform(0.0, 1.0, (n_nodes, horizon))

    base = init_params(
        kind, n_nodes, history, hidden, horizon,
        seed=int(rng.integers(0, 2 ** 31)), scorer_hidden=4,
    )
    arrays = {name: t.data.copy() for name, t in base.tensors.items()}
    window_t = Tensor(window)
    target_t = Tensor(target)

    def build(tensors):
        params = base.with_tensors(dict(tensors))
        pred = forward_batch(graph, params, window_t, batch=1)
        return loss(target_t, pred, params, lambda_reg)

    return check_composition(build, arrays)


def run_suite(seed=0, trials=5, corrupt_op=None):
    """Primitive checks plus ``trials`` composite checks per variant.

    Returns {"ops": {name: err}, "variants": {kind: err}}.  With
    ``corrupt_op`` set, that op's backward rule is scaled by 1.01 for
    the duration (fault-injection path for verifying the verifier).
    """
    if corrupt_op is not None:
        T.set_backward_fault(corrupt_op, 1.01)
    try:
        results = {"ops": check_primitives(seed), "variants": {}}
        for kind in VARIANTS:
            worst = 0.0
            for trial in range(trials):
                worst = max(worst, variant_error(kind, seed * 1000 + trial))
            results["variants"][kind] = worst
    finally:
        if corrupt_op is not None:
            T.clear_backward_faults()
    return results


def worst_entry(results):
    worst_name, worst_err = None, -1.0
    for group in ("ops", "variants"):
        for name, err in results[group].items():
            if err > worst_err:
                worst_name, worst_err = name, err
    return worst_name, worst_err
