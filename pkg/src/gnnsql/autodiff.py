"""Dense-tensor reverse-mode automatic differentiation.

Every value is a float64 numpy array wrapped in a :class:`Tensor`. Operations
record themselves on a process-global tape in execution order (which is a
topological order by construction); :func:`backward` replays the tape in
reverse, visiting each recorded node exactly once. Call :func:`reset_tape`
at the start of each forward pass to bound memory.

Every operation checks its output for NaN/Inf and aborts naming itself, so a
non-finite value can never propagate silently.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Iterator, Optional, Sequence

import numpy as np


class AutodiffError(Exception):
    """Base class for autodiff failures."""


class ShapeError(AutodiffError):
    """Operand shapes do not conform."""


class NonFiniteError(AutodiffError):
    """An operation produced (or was handed) a NaN or Inf."""


_TAPE: list["Tensor"] = []
_GRAD_ENABLED = True


def reset_tape() -> None:
    """Drop all recorded operations (start of a fresh forward pass)."""
    _TAPE.clear()


def tape_size() -> int:
    return len(_TAPE)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable recording inside the block (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A dense float64 array plus an optional gradient of the same shape.

    Leaf tensors with ``requires_grad=True`` get a zero gradient buffer at
    construction; backward accumulates into it, ``zero_grad`` resets it.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_bwd")

    def __init__(self, data, requires_grad: bool = False, *, op: Optional[str] = None,
                 parents: tuple = (), bwd=None):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"operation '{op or 'leaf'}' produced non-finite values")
        self.data = arr
        self.requires_grad = requires_grad
        self.op = op
        self._parents = parents
        self._bwd = bwd
        self.grad = np.zeros_like(arr) if (requires_grad and bwd is None) else None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = self.op or ("param" if self.requires_grad else "const")
        return f"Tensor(shape={self.shape}, op={tag!r})"

    # Small conveniences; the module-level functions are the real API.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    def sum(self, axis=None, keepdims=False):
        return sum_reduce(self, axis=axis, keepdims=keepdims)

    def max(self, axis=None):
        return max_reduce(self, axis=axis)

    def T(self):
        return transpose(self)


def constant(data) -> Tensor:
    """A tensor that never tracks gradients (masks, adjacency, features)."""
    return Tensor(data, requires_grad=False)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _make(op: str, data: np.ndarray, parents: Sequence[Tensor], bwd) -> Tensor:
    track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    if not track:
        return Tensor(data, requires_grad=False, op=op)
    out = Tensor(data, requires_grad=True, op=op, parents=tuple(parents), bwd=bwd)
    _TAPE.append(out)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


def backward(loss: Tensor) -> None:
    """Populate gradients of everything reachable from a scalar loss.

    Intermediate gradients on the tape are cleared first, so repeated calls
    are independent; leaf parameters are not on the tape and keep
    accumulating (per-example gradient accumulation).
    """
    if loss.data.shape != ():
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if loss._bwd is None:
        return  # constant loss: nothing reachable, leaf grads stay zero
    if not any(t is loss for t in _TAPE):
        raise AutodiffError("backward: loss is not on the active tape")
    for t in _TAPE:
        t.grad = None
    loss.grad = np.ones((), dtype=np.float64)
    for t in reversed(_TAPE):
        if t.grad is None or t._bwd is None:
            continue
        t._bwd(t.grad)


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make("add", data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make("sub", data, (a, b), bwd)


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def bwd(g):
        _accumulate(a, -g)

    return _make("neg", -a.data, (a,), bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bwd(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make("mul", data, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        with np.errstate(invalid="ignore", divide="ignore"):
            data = a.data / b.data
    except ValueError:
        raise ShapeError(f"div: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bwd(g):
        _accumulate(a, _unbroadcast(g / b.data, a.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make("div", data, (a, b), bwd)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, b) -> Tensor:
    """Matrix/vector product: 2D@2D, 2D@1D, 1D@2D and 1D@1D (dot)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ShapeError(f"matmul: ranks {a.data.ndim} and {b.data.ndim} unsupported")
    try:
        data = a.data @ b.data
    except ValueError:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform") from None

    def bwd(g):
        ad, bd = a.data, b.data
        if ad.ndim == 2 and bd.ndim == 2:
            _accumulate(a, g @ bd.T)
            _accumulate(b, ad.T @ g)
        elif ad.ndim == 2 and bd.ndim == 1:
            _accumulate(a, np.outer(g, bd))
            _accumulate(b, ad.T @ g)
        elif ad.ndim == 1 and bd.ndim == 2:
            _accumulate(a, bd @ g)
            _accumulate(b, np.outer(ad, g))
        else:
            _accumulate(a, g * bd)
            _accumulate(b, g * ad)

    return _make("matmul", data, (a, b), bwd)


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: rank-2 required, got shape {a.shape}")

    def bwd(g):
        _accumulate(a, g.T)

    return _make("transpose", a.data.T.copy(), (a,), bwd)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(shape)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view shape {a.shape} as {shape}") from None

    def bwd(g):
        _accumulate(a, g.reshape(a.shape))

    return _make("reshape", data.copy(), (a,), bwd)


# ---------------------------------------------------------------------------
# shape surgery

def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: empty input list")
    try:
        data = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(
            f"concat: shapes {[t.shape for t in ts]} do not align on axis {axis}") from None
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(idx)])

    return _make("concat", data, ts, bwd)


def stack(tensors: Sequence) -> Tensor:
    """Stack equal-shape rank-1 tensors into a matrix, one per row."""
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("stack: empty input list")
    if any(t.data.ndim != 1 for t in ts):
        raise ShapeError(f"stack: rank-1 inputs required, got {[t.shape for t in ts]}")
    if len({t.shape for t in ts}) != 1:
        raise ShapeError(f"stack: mismatched shapes {[t.shape for t in ts]}")
    data = np.stack([t.data for t in ts], axis=0)

    def bwd(g):
        for i, t in enumerate(ts):
            _accumulate(t, g[i])

    return _make("stack", data, ts, bwd)


def narrow(a, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice along one axis."""
    a = _as_tensor(a)
    if not (0 <= start <= stop <= a.data.shape[axis]):
        raise ShapeError(f"narrow: range [{start}, {stop}) out of bounds for shape {a.shape}")
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[idx] = g
        _accumulate(a, ga)

    return _make("narrow", a.data[idx].copy(), (a,), bwd)


def gather(a, indices, axis: int = 0) -> Tensor:
    """Select rows (axis 0) or columns (axis 1) by integer index, with repeats."""
    a = _as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError(f"gather: index array must be rank-1, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[axis]):
        raise ShapeError(f"gather: index out of range for axis {axis} of shape {a.shape}")
    if axis == 0:
        data = a.data[idx]
    elif axis == 1:
        data = a.data[:, idx]
    else:
        raise ShapeError(f"gather: axis {axis} unsupported")

    def bwd(g):
        ga = np.zeros_like(a.data)
        if axis == 0:
            np.add.at(ga, idx, g)
        else:
            np.add.at(ga.T, idx, np.asarray(g).T)
        _accumulate(a, ga)

    return _make("gather", data.copy(), (a,), bwd)


def embedding_lookup(table, indices) -> Tensor:
    """Row lookup into an embedding matrix (alias of rank-0 gather)."""
    return gather(table, indices, axis=0)


def pick(a, index: int) -> Tensor:
    """Scalar element of a rank-1 tensor."""
    a = _as_tensor(a)
    if a.data.ndim != 1:
        raise ShapeError(f"pick: rank-1 required, got shape {a.shape}")
    if not (0 <= index < a.data.shape[0]):
        raise ShapeError(f"pick: index {index} out of range for shape {a.shape}")

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[index] = g
        _accumulate(a, ga)

    return _make("pick", a.data[index], (a,), bwd)


# ---------------------------------------------------------------------------
# nonlinearities

def tanh(a) -> Tensor:
    a = _as_tensor(a)
    data = np.tanh(a.data)

    def bwd(g):
        _accumulate(a, g * (1.0 - data * data))

    return _make("tanh", data, (a,), bwd)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    # Split by sign so exp never overflows.
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def bwd(g):
        _accumulate(a, g * data * (1.0 - data))

    return _make("sigmoid", data, (a,), bwd)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(over="ignore"):
        data = np.exp(a.data)

    def bwd(g):
        _accumulate(a, g * data)

    return _make("exp", data, (a,), bwd)


def log(a) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(invalid="ignore", divide="ignore"):
        data = np.log(a.data)

    def bwd(g):
        _accumulate(a, g / a.data)

    return _make("log", data, (a,), bwd)


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(invalid="ignore"):
        data = np.sqrt(a.data)

    def bwd(g):
        _accumulate(a, g * 0.5 / data)

    return _make("sqrt", data, (a,), bwd)


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax along one axis of a rank-1/2 tensor.

    Outputs are strictly positive and sum to 1 along ``axis`` to within
    float64 rounding.
    """
    a = _as_tensor(a)
    if a.data.ndim not in (1, 2):
        raise ShapeError(f"softmax: rank-1 or rank-2 required, got shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        _accumulate(a, (g - dot) * data)

    return _make("softmax", data, (a,), bwd)


# ---------------------------------------------------------------------------
# reductions

def sum_reduce(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.shape).copy() if a.shape else np.asarray(g))
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(ge, a.shape).copy())

    return _make("sum", data, (a,), bwd)


def max_reduce(a, axis=None) -> Tensor:
    """Maximum over all entries or along one axis of a rank-2 tensor.

    The gradient flows through the first-occurring argmax entry only, which
    keeps tie handling deterministic.
    """
    a = _as_tensor(a)
    if axis is None:
        data = a.data.max()
        flat_idx = int(np.argmax(a.data))

        def bwd(g):
            ga = np.zeros_like(a.data)
            ga.flat[flat_idx] = g
            _accumulate(a, ga)

        return _make("max", data, (a,), bwd)

    if a.data.ndim != 2 or axis not in (0, 1):
        raise ShapeError(f"max: axis {axis} unsupported for shape {a.shape}")
    data = a.data.max(axis=axis)
    arg = np.argmax(a.data, axis=axis)

    def bwd(g):
        ga = np.zeros_like(a.data)
        if axis == 0:
            ga[arg, np.arange(a.data.shape[1])] = g
        else:
            ga[np.arange(a.data.shape[0]), arg] = g
        _accumulate(a, ga)

    return _make("max", data, (a,), bwd)


def mean(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_reduce(a, axis=axis), 1.0 / n)
