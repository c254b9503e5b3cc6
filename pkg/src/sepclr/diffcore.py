"""Dense float64 arrays with reverse-mode differentiation.

Every loss in the toolkit is composed from the primitives here. A ``Tape``
records executed primitives in order; ``backward`` replays it in exact
reverse. Tapes are opened per forward pass (no graph reuse) and are
confined to the thread that opened them; when no tape is active the
primitives run in plain inference mode with no recording overhead.

The two O(N^2) kernels (pairwise squared distances, row-wise log-sum-exp)
are delegated to the selected backend, see sepclr.backend.
"""

import threading
from dataclasses import dataclass

import numpy as np

from . import backend


class ShapeError(ValueError):
    """Operand shapes incompatible for a primitive op."""

    def __init__(self, op, *shapes):
        super().__init__(f"{op}: incompatible shapes {' vs '.join(map(str, shapes))}")
        self.op = op
        self.shapes = shapes


class GradCheckError(RuntimeError):
    """f evaluated to a non-finite value during a finite-difference probe."""

    def __init__(self, coordinate, value):
        super().__init__(f"non-finite value {value!r} at coordinate {coordinate}")
        self.coordinate = coordinate
        self.value = value


_state = threading.local()


def _tape_stack():
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = []
        _state.tapes = stack
    return stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of executed primitives; a context manager.

    Topological order is execution order; backward() traverses the exact
    reverse. One tape per forward pass.
    """

    def __init__(self):
        self.nodes = []  # (output DiffArray, backward callable)

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        assert stack and stack[-1] is self
        stack.pop()
        return False

    def record(self, out, bwd):
        self.nodes.append((out, bwd))


class DiffArray:
    """Dense float64 array with a lazily allocated gradient slot."""

    __slots__ = ("values", "grad", "requires_grad", "tape")

    def __init__(self, values, requires_grad=False):
        arr = np.asarray(values, dtype=np.float64)
        if not arr.flags.c_contiguous:  # 0-d arrays are contiguous; not promoted
            arr = np.ascontiguousarray(arr)
        self.values = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.tape = None

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self):
        self.grad = None

    def item(self):
        return float(self.values)

    def accumulate_grad(self, g, owned=False):
        """Add g into the grad slot. owned=True promises g is a fresh
        temporary that may be adopted without copying."""
        if self.grad is None:
            self.grad = g if owned else np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def __repr__(self):
        return f"DiffArray(shape={self.values.shape}, requires_grad={self.requires_grad})"

    # operator sugar; python scalars are folded as constants
    def __add__(self, other):
        if isinstance(other, (int, float)):
            return add_scalar(self, float(other))
        return add(self, other)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return add_scalar(self, -float(other))
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(values):
    return DiffArray(values, requires_grad=False)


def parameter(values):
    return DiffArray(values, requires_grad=True)


def as_diff(x):
    return x if isinstance(x, DiffArray) else constant(x)


def _make(values, inputs, bwd):
    """Create an output array, recording a node if grad is being traced."""
    tape = active_tape()
    out = DiffArray(values)
    if tape is not None and any(i.requires_grad for i in inputs):
        out.requires_grad = True
        out.tape = tape
        tape.record(out, bwd)
    return out


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to `shape`."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _acc_unbroadcast(x, g, shape):
    r = _unbroadcast(g, shape)
    x.accumulate_grad(r, owned=r is not g and r.base is None)


def _broadcastable(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------------------
# elementwise

def add(a, b):
    a, b = as_diff(a), as_diff(b)
    _broadcastable("add", a, b)

    def bwd(g):
        if a.requires_grad:
            _acc_unbroadcast(a, g, a.shape)
        if b.requires_grad:
            _acc_unbroadcast(b, g, b.shape)

    return _make(a.values + b.values, (a, b), bwd)


def sub(a, b):
    a, b = as_diff(a), as_diff(b)
    _broadcastable("sub", a, b)

    def bwd(g):
        if a.requires_grad:
            _acc_unbroadcast(a, g, a.shape)
        if b.requires_grad:
            _acc_unbroadcast(b, -g, b.shape)

    return _make(a.values - b.values, (a, b), bwd)


def mul(a, b):
    a, b = as_diff(a), as_diff(b)
    _broadcastable("mul", a, b)

    def bwd(g):
        if a.requires_grad:
            _acc_unbroadcast(a, g * b.values, a.shape)
        if b.requires_grad:
            _acc_unbroadcast(b, g * a.values, b.shape)

    return _make(a.values * b.values, (a, b), bwd)


def div(a, b):
    a, b = as_diff(a), as_diff(b)
    _broadcastable("div", a, b)

    def bwd(g):
        if a.requires_grad:
            _acc_unbroadcast(a, g / b.values, a.shape)
        if b.requires_grad:
            _acc_unbroadcast(b, -g * a.values / (b.values * b.values), b.shape)

    return _make(a.values / b.values, (a, b), bwd)


def scalar_mul(a, c):
    a = as_diff(a)
    c = float(c)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(c * g, owned=True)

    return _make(a.values * c, (a,), bwd)


def add_scalar(a, c):
    a = as_diff(a)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g)

    return _make(a.values + float(c), (a,), bwd)


def exp(a):
    a = as_diff(a)
    out_values = np.exp(a.values)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * out_values, owned=True)

    return _make(out_values, (a,), bwd)


def log(a):
    a = as_diff(a)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g / a.values, owned=True)

    return _make(np.log(a.values), (a,), bwd)


def sqrt(a):
    a = as_diff(a)
    out_values = np.sqrt(a.values)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(0.5 * g / out_values, owned=True)

    return _make(out_values, (a,), bwd)


def relu(a):
    a = as_diff(a)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * (a.values > 0.0), owned=True)

    return _make(np.maximum(a.values, 0.0), (a,), bwd)


def tanh(a):
    a = as_diff(a)
    out_values = np.tanh(a.values)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g * (1.0 - out_values * out_values), owned=True)

    return _make(out_values, (a,), bwd)


# ---------------------------------------------------------------------------
# linear algebra and structure

def matmul(a, b):
    a, b = as_diff(a), as_diff(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.values.T, owned=True)
        if b.requires_grad:
            b.accumulate_grad(a.values.T @ g, owned=True)

    return _make(a.values @ b.values, (a, b), bwd)


def transpose(a):
    a = as_diff(a)
    if a.values.ndim != 2:
        raise ShapeError("transpose", a.shape)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g.T)

    return _make(a.values.T, (a,), bwd)


def reshape(a, shape):
    a = as_diff(a)
    old = a.shape

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g.reshape(old))

    return _make(a.values.reshape(shape), (a,), bwd)


def stack_cols(columns):
    """Stack K same-length vectors into an (N, K) matrix."""
    columns = [as_diff(c) for c in columns]
    n = columns[0].shape[0]
    for c in columns:
        if c.values.ndim != 1 or c.shape[0] != n:
            raise ShapeError("stack_cols", *(c.shape for c in columns))

    def bwd(g):
        for k, c in enumerate(columns):
            if c.requires_grad:
                c.accumulate_grad(g[:, k])

    return _make(np.stack([c.values for c in columns], axis=1), tuple(columns), bwd)


def concat_rows(a, b):
    """Stack two matrices with equal column counts along axis 0."""
    a, b = as_diff(a), as_diff(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError("concat_rows", a.shape, b.shape)
    n = a.shape[0]

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(g[:n])
        if b.requires_grad:
            b.accumulate_grad(g[n:])

    return _make(np.concatenate([a.values, b.values]), (a, b), bwd)


def take_rows(a, indices):
    a = as_diff(a)
    indices = np.asarray(indices, dtype=np.intp)

    def bwd(g):
        if a.requires_grad:
            buf = np.zeros_like(a.values)
            np.add.at(buf, indices, g)
            a.accumulate_grad(buf, owned=True)

    return _make(a.values[indices], (a,), bwd)


# ---------------------------------------------------------------------------
# reductions

def sum_all(a):
    a = as_diff(a)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(np.full(a.shape, float(g)), owned=True)

    return _make(np.asarray(a.values.sum()), (a,), bwd)


def mean_all(a):
    a = as_diff(a)
    n = a.values.size

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(np.full(a.shape, float(g) / n), owned=True)

    return _make(np.asarray(a.values.mean()), (a,), bwd)


def col_mean(a):
    """Mean over axis 0 of an (N, D) matrix -> (D,)."""
    a = as_diff(a)
    if a.values.ndim != 2:
        raise ShapeError("col_mean", a.shape)
    n = a.shape[0]

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(np.broadcast_to(g / n, a.shape).copy(), owned=True)

    return _make(a.values.mean(axis=0), (a,), bwd)


def row_sq_norms(a):
    """Squared L2 norm of every row of an (N, D) matrix -> (N,)."""
    a = as_diff(a)
    if a.values.ndim != 2:
        raise ShapeError("row_sq_norms", a.shape)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(2.0 * g[:, None] * a.values, owned=True)

    return _make(np.einsum("ij,ij->i", a.values, a.values), (a,), bwd)


def row_logsumexp(a):
    """Max-shifted log(sum(exp(row))) of an (N, M) matrix -> (N,)."""
    a = as_diff(a)
    if a.values.ndim != 2:
        raise ShapeError("row_logsumexp", a.shape)
    lse = backend.row_logsumexp(a.values)

    def bwd(g):
        if a.requires_grad:
            a.accumulate_grad(backend.row_logsumexp_backward(a.values, lse, g), owned=True)

    return _make(lse, (a,), bwd)


def pairwise_sq_dists(a, b):
    """All squared L2 distances between rows of (N, D) and (M, D)."""
    a, b = as_diff(a), as_diff(b)
    if (
        a.values.ndim != 2
        or b.values.ndim != 2
        or a.shape[1] != b.shape[1]
    ):
        raise ShapeError("pairwise_sq_dists", a.shape, b.shape)

    def bwd(g):
        da, db = backend.pairwise_sq_dists_backward(a.values, b.values, g)
        if a.requires_grad:
            a.accumulate_grad(da, owned=True)
        if b.requires_grad:
            b.accumulate_grad(db, owned=True)

    return _make(backend.pairwise_sq_dists(a.values, b.values), (a, b), bwd)


_NORM_GUARD = 1e-12


def unit_rows(a):
    """Project every row of an (N, D) matrix onto the unit sphere.

    Rows with norm < 1e-12 map to the first basis vector and receive zero
    gradient; this keeps pathological initialisations NaN-free.
    """
    a = as_diff(a)
    if a.values.ndim != 2:
        raise ShapeError("unit_rows", a.shape)
    norms = np.sqrt(np.einsum("ij,ij->i", a.values, a.values))
    guarded = norms < _NORM_GUARD
    safe = np.where(guarded, 1.0, norms)
    out_values = a.values / safe[:, None]
    if guarded.any():
        out_values[guarded] = 0.0
        out_values[guarded, 0] = 1.0

    def bwd(g):
        if a.requires_grad:
            dots = np.einsum("ij,ij->i", g, out_values)
            da = (g - dots[:, None] * out_values) / safe[:, None]
            if guarded.any():
                da[guarded] = 0.0
            a.accumulate_grad(da, owned=True)

    return _make(out_values, (a,), bwd)


# ---------------------------------------------------------------------------
# reverse pass and verification

def backward(loss):
    """Run reverse-mode accumulation from a scalar loss through its tape.

    The tape is consumed: its node list is cleared afterwards so the
    recorded intermediates (which reference the tape back) free promptly
    instead of waiting for the cycle collector. One backward per tape.
    """
    if not isinstance(loss, DiffArray) or loss.values.size != 1:
        raise ShapeError("backward", getattr(loss, "shape", None))
    tape = loss.tape
    if tape is None:
        raise ValueError("backward: loss was not produced through an active tape")
    loss.grad = np.ones_like(loss.values)
    for out, bwd in reversed(tape.nodes):
        if out.grad is not None:
            bwd(out.grad)
    tape.nodes.clear()


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_coordinate: tuple
    rtol: float
    h: float
    passed: bool


def check_gradients(f, x, h=1e-5, rtol=1e-4, floor=1e-7):
    """Compare reverse-mode gradients of a scalar f against central differences.

    The relative error at coordinate i is |ga - gn| / max(|ga|, |gn|, floor);
    the report passes iff the max over coordinates is <= rtol.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    leaf = parameter(np.array(x.values if isinstance(x, DiffArray) else x))
    with Tape():
        out = f(leaf)
        if not np.isfinite(out.values).all():
            raise GradCheckError((), float(out.values))
        backward(out)
    analytic = leaf.grad.copy()

    def eval_at(values, coord):
        y = f(constant(values))
        v = float(y.values)
        if not np.isfinite(v):
            raise GradCheckError(coord, v)
        return v

    numeric = np.zeros_like(analytic)
    base = leaf.values
    it = np.nditer(base, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        bumped = base.copy()
        bumped[idx] += h
        fp = eval_at(bumped, idx)
        bumped[idx] = base[idx] - h
        fm = eval_at(bumped, idx)
        numeric[idx] = (fp - fm) / (2.0 * h)
        it.iternext()

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    rel = np.abs(analytic - numeric) / denom
    worst = np.unravel_index(np.argmax(rel), rel.shape)
    max_rel = float(rel[worst])
    return GradCheckReport(
        max_rel_error=max_rel,
        worst_coordinate=worst,
        rtol=rtol,
        h=h,
        passed=max_rel <= rtol,
    )
