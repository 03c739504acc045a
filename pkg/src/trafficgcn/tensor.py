"""Dense 2-D tensors with reverse-mode gradient accumulation.

Every value in the package is a row-major float64 matrix.  Forward
operations run on plain numpy; when a :class:`GradientTape` is active on
the current thread, each operation whose inputs are tracked records a
backward rule, and ``tape.gradients(scalar)`` replays the rules in
reverse creation order (which is reverse topological order, since an
operation's inputs always exist before its output).

Broadcasting is deliberately restricted: ``scale`` (scalar times
matrix), ``add_bias`` (a 1 x C row added to every row) and
``mul_colvec`` (an R x 1 column scaling every column) are the only
shape-bending operations, each with its own backward rule.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import ContractError, ShapeError

_local = threading.local()

# Fault-injection hook for gradient-check harnesses: maps an op name to a
# multiplier applied to its backward rule.  Empty in normal operation.
_BACKWARD_FAULTS: dict[str, float] = {}


def set_backward_fault(op_name, scale):
    """Corrupt the named op's backward rule by ``scale`` (verification aid)."""
    _BACKWARD_FAULTS[op_name] = float(scale)


def clear_backward_faults():
    _BACKWARD_FAULTS.clear()


def _fault(op_name):
    return _BACKWARD_FAULTS.get(op_name, 1.0)


class Tensor:
    """Immutable dense matrix; the substrate for all model math."""

    __slots__ = ("data",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got array of ndim {arr.ndim}")
        arr.setflags(write=False)
        self.data = arr

    @classmethod
    def _wrap(cls, arr):
        """Adopt a freshly computed float64 array without copying."""
        t = object.__new__(cls)
        arr.setflags(write=False)
        t.data = arr
        return t

    @classmethod
    def zeros(cls, rows, cols):
        return cls._wrap(np.zeros((rows, cols)))

    @classmethod
    def ones(cls, rows, cols):
        return cls._wrap(np.ones((rows, cols)))

    @classmethod
    def eye(cls, n):
        return cls._wrap(np.eye(n))

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def __repr__(self):
        return f"Tensor({self.rows}x{self.cols})"


class GradientTape:
    """Single-writer record of operations for one differentiation pass.

    Use as a context manager; ops executed inside record backward rules
    for any tensor reachable from a watched parameter.  ``gradients``
    may be called once; a second call fails loudly rather than silently
    accumulating twice.
    """

    def __init__(self):
        self._nodes = []          # (output id, backward rule)
        self._tracked = set()     # ids participating in the graph
        self._watched = []        # parameter tensors, in watch order
        self._keepalive = []      # strong refs so ids stay unique
        self._consumed = False

    def __enter__(self):
        stack = getattr(_local, "tapes", None)
        if stack is None:
            stack = _local.tapes = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _local.tapes.pop()
        return False

    def watch(self, tensor):
        """Register a parameter; its gradient appears in the output map."""
        if id(tensor) not in self._tracked:
            self._tracked.add(id(tensor))
            self._watched.append(tensor)
            self._keepalive.append(tensor)

    def tracks(self, tensor):
        return id(tensor) in self._tracked

    def _record(self, out, inputs, backward):
        self._tracked.add(id(out))
        self._keepalive.append(out)
        self._keepalive.extend(inputs)
        self._nodes.append((id(out), backward))

    def gradients(self, root):
        """Return d(root)/d(p) for every watched parameter p.

        Parameters with no path to ``root`` map to exact zeros.
        """
        if self._consumed:
            raise ContractError("tape already consumed by a previous backward pass")
        if root.shape != (1, 1):
            raise ContractError(f"backward root must be scalar (1x1), got {root.shape}")
        self._consumed = True

        adjoint = {id(root): np.ones((1, 1))}

        def accumulate(tensor, grad):
            key = id(tensor)
            if key not in self._tracked:
                return
            if key in adjoint:
                adjoint[key] = adjoint[key] + grad
            else:
                adjoint[key] = grad

        for out_id, backward in reversed(self._nodes):
            g = adjoint.get(out_id)
            if g is None:
                continue
            backward(g, accumulate)

        return {
            p: adjoint.get(id(p), np.zeros_like(p.data))
            for p in self._watched
        }


def active_tape():
    stack = getattr(_local, "tapes", None)
    return stack[-1] if stack else None


def _tape_for(*tensors):
    tape = active_tape()
    if tape is None:
        return None
    if any(tape.tracks(t) for t in tensors):
        return tape
    return None


# ---------------------------------------------------------------------------
# forward operations


def matmul(a, b):
    """Matrix product; backward dA = G.B^T, dB = A^T.G."""
    if a.cols != b.rows:
        raise ShapeError(
            f"matmul: inner dimensions disagree ({a.rows}x{a.cols} vs {b.rows}x{b.cols})"
        )
    out = Tensor._wrap(a.data @ b.data)
    tape = _tape_for(a, b)
    if tape is not None:
        ad, bd = a.data, b.data

        def backward(g, acc):
            k = _fault("matmul")
            acc(a, (g @ bd.T) * k)
            acc(b, (ad.T @ g) * k)

        tape._record(out, (a, b), backward)
    return out


def _binary(a, b, name):
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shapes differ ({a.rows}x{a.cols} vs {b.rows}x{b.cols})")


def add(a, b):
    _binary(a, b, "add")
    out = Tensor._wrap(a.data + b.data)
    tape = _tape_for(a, b)
    if tape is not None:
        def backward(g, acc):
            k = _fault("add")
            acc(a, g * k)
            acc(b, g * k)

        tape._record(out, (a, b), backward)
    return out


def sub(a, b):
    _binary(a, b, "sub")
    out = Tensor._wrap(a.data - b.data)
    tape = _tape_for(a, b)
    if tape is not None:
        def backward(g, acc):
            k = _fault("sub")
            acc(a, g * k)
            acc(b, -g * k)

        tape._record(out, (a, b), backward)
    return out


def hadamard(a, b):
    _binary(a, b, "hadamard")
    out = Tensor._wrap(a.data * b.data)
    tape = _tape_for(a, b)
    if tape is not None:
        ad, bd = a.data, b.data

        def backward(g, acc):
            k = _fault("hadamard")
            acc(a, g * bd * k)
            acc(b, g * ad * k)

        tape._record(out, (a, b), backward)
    return out


def _stable_sigmoid(x):
    # Split by sign so exp never sees a large positive argument.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    out = Tensor._wrap(_stable_sigmoid(a.data))
    tape = _tape_for(a)
    if tape is not None:
        s = out.data

        def backward(g, acc):
            acc(a, g * s * (1.0 - s) * _fault("sigmoid"))

        tape._record(out, (a,), backward)
    return out


def tanh(a):
    out = Tensor._wrap(np.tanh(a.data))
    tape = _tape_for(a)
    if tape is not None:
        t = out.data

        def backward(g, acc):
            acc(a, g * (1.0 - t * t) * _fault("tanh"))

        tape._record(out, (a,), backward)
    return out


def relu(a):
    out = Tensor._wrap(np.maximum(a.data, 0.0))
    tape = _tape_for(a)
    if tape is not None:
        mask = (a.data > 0).astype(np.float64)

        def backward(g, acc):
            acc(a, g * mask * _fault("relu"))

        tape._record(out, (a,), backward)
    return out


_ELEMENTWISE_BINARY = {"add": add, "sub": sub, "hadamard": hadamard}
_ELEMENTWISE_UNARY = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def elementwise(op_kind, a, b=None):
    """Dispatch by name: add/sub/hadamard need b, sigmoid/tanh/relu must not get one."""
    if op_kind in _ELEMENTWISE_BINARY:
        if b is None:
            raise ContractError(f"elementwise {op_kind!r} needs two operands")
        return _ELEMENTWISE_BINARY[op_kind](a, b)
    if op_kind in _ELEMENTWISE_UNARY:
        if b is not None:
            raise ContractError(f"elementwise {op_kind!r} takes one operand")
        return _ELEMENTWISE_UNARY[op_kind](a)
    raise ContractError(f"unknown elementwise kind {op_kind!r}")


def _softmax_rows_values(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows(a):
    """Row-wise softmax with max-subtraction; rows sum to 1."""
    out = Tensor._wrap(_softmax_rows_values(a.data))
    tape = _tape_for(a)
    if tape is not None:
        y = out.data

        def backward(g, acc):
            dot = (g * y).sum(axis=1, keepdims=True)
            acc(a, y * (g - dot) * _fault("softmax"))

        tape._record(out, (a,), backward)
    return out


def softmax_vector(e):
    """Softmax of an n x 1 score column (overflow-safe via max shift)."""
    if e.cols != 1:
        raise ShapeError(f"softmax_vector expects an n x 1 column, got {e.rows}x{e.cols}")
    out = Tensor._wrap(_softmax_rows_values(e.data.T).T)
    tape = _tape_for(e)
    if tape is not None:
        y = out.data

        def backward(g, acc):
            dot = float((g * y).sum())
            acc(e, y * (g - dot) * _fault("softmax"))

        tape._record(out, (e,), backward)
    return out


def concat_cols(parts):
    """Concatenate along the feature axis; backward splits the gradient."""
    parts = list(parts)
    if not parts:
        raise ContractError("concat_cols of an empty sequence")
    rows = parts[0].rows
    for p in parts[1:]:
        if p.rows != rows:
            raise ShapeError(
                f"concat_cols: row counts differ ({rows} vs {p.rows})"
            )
    out = Tensor._wrap(np.concatenate([p.data for p in parts], axis=1))
    tape = _tape_for(*parts)
    if tape is not None:
        widths = [p.cols for p in parts]

        def backward(g, acc):
            k = _fault("concat_cols")
            start = 0
            for p, w in zip(parts, widths):
                acc(p, g[:, start:start + w] * k)
                start += w

        tape._record(out, tuple(parts), backward)
    return out


def slice_cols(a, start, stop):
    if not (0 <= start < stop <= a.cols):
        raise ShapeError(f"slice_cols [{start}:{stop}] out of range for {a.rows}x{a.cols}")
    out = Tensor._wrap(a.data[:, start:stop].copy())
    tape = _tape_for(a)
    if tape is not None:
        def backward(g, acc):
            full = np.zeros((a.rows, a.cols))
            full[:, start:stop] = g
            acc(a, full * _fault("slice_cols"))

        tape._record(out, (a,), backward)
    return out


def reshape(a, rows, cols):
    if rows * cols != a.rows * a.cols:
        raise ShapeError(f"reshape {a.rows}x{a.cols} -> {rows}x{cols} changes size")
    out = Tensor._wrap(a.data.reshape(rows, cols).copy())
    tape = _tape_for(a)
    if tape is not None:
        def backward(g, acc):
            acc(a, g.reshape(a.rows, a.cols) * _fault("reshape"))

        tape._record(out, (a,), backward)
    return out


def repeat_rows(v, k):
    """Repeat each row of an R x 1 column k times consecutively."""
    if v.cols != 1:
        raise ShapeError(f"repeat_rows expects an R x 1 column, got {v.rows}x{v.cols}")
    out = Tensor._wrap(np.repeat(v.data, k, axis=0))
    tape = _tape_for(v)
    if tape is not None:
        def backward(g, acc):
            acc(v, g.reshape(v.rows, k).sum(axis=1, keepdims=True) * _fault("repeat_rows"))

        tape._record(out, (v,), backward)
    return out


def add_bias(a, bias):
    """Add a 1 x C bias row to every row of an R x C matrix."""
    if bias.rows != 1 or bias.cols != a.cols:
        raise ShapeError(
            f"add_bias: bias must be 1x{a.cols}, got {bias.rows}x{bias.cols}"
        )
    out = Tensor._wrap(a.data + bias.data)
    tape = _tape_for(a, bias)
    if tape is not None:
        def backward(g, acc):
            k = _fault("add_bias")
            acc(a, g * k)
            acc(bias, g.sum(axis=0, keepdims=True) * k)

        tape._record(out, (a, bias), backward)
    return out


def mul_colvec(a, v):
    """Scale row i of ``a`` by the scalar v[i, 0]."""
    if v.cols != 1 or v.rows != a.rows:
        raise ShapeError(
            f"mul_colvec: column must be {a.rows}x1, got {v.rows}x{v.cols}"
        )
    out = Tensor._wrap(a.data * v.data)
    tape = _tape_for(a, v)
    if tape is not None:
        ad, vd = a.data, v.data

        def backward(g, acc):
            k = _fault("mul_colvec")
            acc(a, g * vd * k)
            acc(v, (g * ad).sum(axis=1, keepdims=True) * k)

        tape._record(out, (a, v), backward)
    return out


def scale(a, k):
    """Multiply by a python scalar (the one permitted broadcast)."""
    k = float(k)
    out = Tensor._wrap(a.data * k)
    tape = _tape_for(a)
    if tape is not None:
        def backward(g, acc):
            acc(a, g * k * _fault("scale"))

        tape._record(out, (a,), backward)
    return out


def sum_all(a):
    """Reduce to a 1 x 1 scalar."""
    out = Tensor._wrap(np.array([[a.data.sum()]]))
    tape = _tape_for(a)
    if tape is not None:
        def backward(g, acc):
            acc(a, np.full((a.rows, a.cols), g[0, 0]) * _fault("sum_all"))

        tape._record(out, (a,), backward)
    return out


def mean_all(a):
    return scale(sum_all(a), 1.0 / (a.rows * a.cols))


def sum_sq(a):
    return sum_all(hadamard(a, a))
