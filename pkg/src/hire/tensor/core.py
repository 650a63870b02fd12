"""Dense tensors with tape-recorded reverse-mode gradients.

A :class:`Tape` is activated with ``with Tape() as tape:``; while it is active
every op whose inputs need gradients appends one record. ``tape.backward(loss)``
replays the records in reverse. Outside a tape ops run forward only, which is
what inference uses.

Only bias-over-rows broadcasting is supported; any other shape mismatch raises
:class:`ShapeError`.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .. import _kernels


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    """A dense array, optionally tracked for gradients.

    ``data`` is always a C-contiguous ndarray of float32 or float64.
    ``grad`` is ``None`` until a backward pass reaches the tensor.
    """

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = np.ascontiguousarray(arr)
        if self.data.ndim == 0:
            self.data = self.data.reshape(1)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # operator sugar used by tests and the trainer
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def _accumulate(t: Tensor, g: np.ndarray, owned: bool = False) -> None:
    """Add ``g`` into ``t.grad``; ``owned`` means ``g`` is a fresh array nobody else holds."""
    if not t.requires_grad:
        return
    if t.grad is None:
        if owned and g.dtype == t.data.dtype:
            t.grad = g.reshape(t.shape)
        else:
            t.grad = np.array(g, dtype=t.data.dtype, copy=True).reshape(t.shape)
    else:
        t.grad += g.reshape(t.shape)


class _Record:
    __slots__ = ("output", "backward")

    def __init__(self, output: Tensor, backward: Callable[[np.ndarray], None]):
        self.output = output
        self.backward = backward


class Tape:
    """Ordered log of differentiable ops executed while the tape is active."""

    _local = threading.local()

    def __init__(self):
        self.records: list[_Record] = []
        self._previous: Tape | None = None

    def __enter__(self) -> "Tape":
        self._previous = getattr(Tape._local, "current", None)
        Tape._local.current = self
        return self

    def __exit__(self, *exc) -> None:
        Tape._local.current = self._previous

    @staticmethod
    def current() -> "Tape | None":
        return getattr(Tape._local, "current", None)

    def backward(self, loss: Tensor, grad: np.ndarray | None = None) -> None:
        """Propagate from ``loss`` through every record, newest first.

        Gradients accumulate into ``.grad``; zero them between steps.
        """
        if grad is None:
            if loss.data.size != 1:
                raise ShapeError(f"backward() without grad needs a scalar, got {loss.shape}")
            grad = np.ones_like(loss.data)
        _accumulate(loss, grad)
        for rec in reversed(self.records):
            g = rec.output.grad
            if g is not None:
                rec.backward(g)
        # intermediates keep no gradients once consumed
        for rec in self.records:
            rec.output.grad = None
        self.records.clear()


def _result(data: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    tape = Tape.current()
    if needs and tape is not None:
        tape.records.append(_Record(out, backward))
    return out


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


# ---------------------------------------------------------------- arithmetic


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _result(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _result(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")

    def backward(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _result(a.data * b.data, (a, b), backward)


def scale(x: Tensor, c: float) -> Tensor:
    c = x.data.dtype.type(c)

    def backward(g):
        _accumulate(x, g * c)

    return _result(x.data * c, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    y = np.empty_like(d)
    pos = d >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ez = np.exp(d[~pos])
    y[~pos] = ez / (1.0 + ez)

    def backward(g):
        _accumulate(x, g * y * (1.0 - y))

    return _result(y, (x,), backward)


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero mean, unit variance over the last axis; no gain or bias."""
    d = x.data
    mu = d.mean(axis=-1, keepdims=True)
    xc = d - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    y = xc * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * y).mean(axis=-1, keepdims=True)
        _accumulate(x, inv * (g - gm - y * gy))

    return _result(y.astype(d.dtype, copy=False), (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    def backward(g):
        _accumulate(x, np.broadcast_to(g.reshape(()), x.shape))

    return _result(np.array([x.data.sum()], dtype=x.dtype), (x,), backward)


# ------------------------------------------------------------ linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a[..., p, q] @ b[..., q, r]``; ``b`` may also be a plain 2-D matrix.

    Batch dimensions must match exactly when both operands have them.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: need rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} vs {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dimensions differ, {a.shape} vs {b.shape}")
    flat = b.ndim == 2 and a.ndim > 2
    if flat:
        # one GEMM over all leading rows instead of a loop over batch slices
        out = (a.data.reshape(-1, a.shape[-1]) @ b.data).reshape(a.shape[:-1] + (b.shape[-1],))
    else:
        out = np.matmul(a.data, b.data)

    def backward(g):
        if flat:
            g2 = g.reshape(-1, g.shape[-1])
            if a.requires_grad:
                _accumulate(a, g2 @ b.data.T, owned=True)
            if b.requires_grad:
                _accumulate(b, a.data.reshape(-1, a.shape[-1]).T @ g2, owned=True)
            return
        if a.requires_grad:
            _accumulate(a, np.matmul(g, np.swapaxes(b.data, -1, -2)), owned=True)
        if b.requires_grad:
            if b.ndim == 2:
                _accumulate(b, a.data.T @ g, owned=True)
            else:
                _accumulate(b, np.matmul(np.swapaxes(a.data, -1, -2), g), owned=True)

    return _result(out, (a, b), backward)


def linear(x: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ w`` plus ``bias`` broadcast over rows."""
    if w.ndim != 2:
        raise ShapeError(f"linear: weight must be 2-D, got {w.shape}")
    y = matmul(x, w)
    if bias is None:
        return y
    if bias.shape != (w.shape[1],):
        raise ShapeError(f"linear: bias shape {bias.shape} does not match weight {w.shape}")

    def backward(g):
        _accumulate(y, g)
        _accumulate(bias, g.reshape(-1, g.shape[-1]).sum(axis=0))

    return _result(y.data + bias.data, (y, bias), backward)


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilised by the row maximum."""
    cols = x.shape[-1]
    x2 = x.data.reshape(-1, cols)
    y2 = np.empty_like(x2)
    _kernels.softmax_rows(x2, y2)
    y = y2.reshape(x.shape)

    def backward(g):
        dx = np.empty_like(y2)
        _kernels.softmax_rows_backward(y2, np.ascontiguousarray(g, dtype=y2.dtype).reshape(-1, cols), dx)
        _accumulate(x, dx)

    return _result(y, (x,), backward)


def take_rows(w: Tensor, index) -> Tensor:
    """Rows of ``w`` selected by integer ``index``; equals one_hot(index) @ w."""
    idx = np.asarray(index, dtype=np.int64)
    flat = np.ascontiguousarray(idx.reshape(-1))
    if flat.size and (flat.min() < 0 or flat.max() >= w.shape[0]):
        raise IndexError(f"take_rows: index out of range for {w.shape[0]} rows")
    out = w.data[flat].reshape(idx.shape + w.shape[1:])

    def backward(g):
        if w.requires_grad:
            acc = np.zeros_like(w.data)
            _kernels.scatter_add_rows(acc, flat, np.ascontiguousarray(g, dtype=w.dtype).reshape(flat.size, -1))
            _accumulate(w, acc)

    return _result(out, (w,), backward)


# ----------------------------------------------------------- shape plumbing


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot map {x.shape} ({x.data.size} elements) to {shape}") from None

    def backward(g):
        _accumulate(x, g.reshape(x.shape))

    return _result(np.ascontiguousarray(out), (x,), backward)


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    """Permute axes (default: swap the last two)."""
    if axes is None:
        axes = list(range(x.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: {axes} is not a permutation of {x.ndim} axes")
    inverse = tuple(np.argsort(axes))

    def backward(g):
        _accumulate(x, np.transpose(g, inverse))

    return _result(np.ascontiguousarray(np.transpose(x.data, axes)), (x,), backward)


def stack(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise ShapeError("stack: empty input")
    first = parts[0].shape
    for p in parts[1:]:
        if p.shape != first:
            raise ShapeError(f"stack: shape mismatch {first} vs {p.shape}")
    out = np.stack([p.data for p in parts], axis=axis)

    def backward(g):
        for i, p in enumerate(parts):
            _accumulate(p, np.take(g, i, axis=axis))

    return _result(out, tuple(parts), backward)


def concat_last(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("concat_last: empty input")
    lead = parts[0].shape[:-1]
    for p in parts[1:]:
        if p.shape[:-1] != lead:
            raise ShapeError(f"concat_last: leading dims differ, {parts[0].shape} vs {p.shape}")
    sizes = [p.shape[-1] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=-1)

    def backward(g):
        start = 0
        for p, size in zip(parts, sizes):
            _accumulate(p, g[..., start:start + size])
            start += size

    return _result(out, tuple(parts), backward)


def split_last(x: Tensor, sizes: Sequence[int]) -> list[Tensor]:
    if sum(sizes) != x.shape[-1]:
        raise ShapeError(f"split_last: sizes {list(sizes)} do not sum to {x.shape[-1]}")
    outs = []
    start = 0
    for size in sizes:
        lo, hi = start, start + size

        def backward(g, lo=lo, hi=hi):
            full = np.zeros_like(x.data)
            full[..., lo:hi] = g
            _accumulate(x, full)

        outs.append(_result(np.ascontiguousarray(x.data[..., lo:hi]), (x,), backward))
        start = hi
    return outs
