"""Dense tensors and reverse-mode differentiation on an explicit tape.

A :class:`Tensor` wraps a C-contiguous numpy array and is treated as
immutable: operations allocate fresh outputs and never write to operands.
Recording is opt-in — every op takes ``tape=None`` for plain inference and a
:class:`Tape` when gradients are needed. A tape belongs to one forward pass
on one thread; concurrent passes each use their own.

Working precision is float32; float64 is supported throughout so gradients
can be checked against finite differences at tight tolerances.

Elementwise ops accept equal-shaped tensors or a python scalar as the second
operand; there is no broadcasting beyond that (shapes in this engine are all
static, and silent broadcasts hide bugs).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class Tensor:
    """Dense N-dimensional array, row-major, float32 or float64."""

    __slots__ = ("data",)

    def __init__(self, data, dtype=None):
        if dtype is None and isinstance(data, np.ndarray) and data.dtype in (
            np.float32,
            np.float64,
        ):
            arr = np.array(data, order="C")
        else:
            arr = np.array(data, dtype=dtype or np.float32, order="C")
        if arr.dtype not in (np.float32, np.float64):
            raise TypeError(f"Tensor holds float32/float64 data, got {arr.dtype}")
        self.data = arr

    @staticmethod
    def _wrap(arr: np.ndarray) -> "Tensor":
        """Adopt ``arr`` without copying (internal: fresh op outputs only)."""
        t = Tensor.__new__(Tensor)
        t.data = arr
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name})"


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tape:
    """Ordered record of primitive ops from one forward pass.

    Replaying the backward rules in reverse recording order yields the
    gradient of a scalar loss for every recorded value; gradients are
    accumulated additively across all uses of a value.
    """

    __slots__ = ("_entries", "_known")

    def __init__(self):
        self._entries: list[tuple[Tensor, tuple[Tensor, ...], BackwardFn]] = []
        self._known: set[int] = set()

    def record(self, output: Tensor, inputs: Sequence[Tensor], backward: BackwardFn) -> None:
        inputs = tuple(inputs)
        self._entries.append((output, inputs, backward))
        self._known.add(id(output))
        self._known.update(id(t) for t in inputs)

    def knows(self, t: Tensor) -> bool:
        return id(t) in self._known

    def __len__(self) -> int:
        return len(self._entries)


def grad(tape: Tape, loss: Tensor, wrt: Sequence[Tensor]) -> list[Tensor]:
    """Gradients of a scalar ``loss`` w.r.t. each tensor in ``wrt``.

    Values recorded on the tape but not on any path to the loss get zero
    gradients; tensors never recorded at all are an error.
    """
    if loss.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
    for w in wrt:
        if not tape.knows(w):
            raise ValueError("requested gradient for a tensor not recorded on this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for out, inputs, backward in reversed(tape._entries):
        g = grads.get(id(out))
        if g is None:
            continue
        contribs = backward(g)
        for t, c in zip(inputs, contribs):
            if c is None:
                continue
            prev = grads.get(id(t))
            grads[id(t)] = c if prev is None else prev + c
    return [Tensor._wrap(grads[id(w)].copy()) if id(w) in grads else zeros_like(w) for w in wrt]


def zeros_like(t: Tensor) -> Tensor:
    return Tensor._wrap(np.zeros_like(t.data))


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: operand shapes differ, {a.shape} vs {b.shape}")
    if a.dtype != b.dtype:
        raise TypeError(f"{op}: operand dtypes differ, {a.dtype} vs {b.dtype}")


def add(a: Tensor, b, tape: Tape | None = None) -> Tensor:
    if isinstance(b, Tensor):
        _check_same_shape("add", a, b)
        out = Tensor._wrap(a.data + b.data)
        if tape is not None:
            tape.record(out, (a, b), lambda g: (g, g))
    else:
        out = Tensor._wrap(a.data + a.dtype.type(b))
        if tape is not None:
            tape.record(out, (a,), lambda g: (g,))
    return out


def sub(a: Tensor, b, tape: Tape | None = None) -> Tensor:
    if isinstance(b, Tensor):
        _check_same_shape("sub", a, b)
        out = Tensor._wrap(a.data - b.data)
        if tape is not None:
            tape.record(out, (a, b), lambda g: (g, -g))
    else:
        out = Tensor._wrap(a.data - a.dtype.type(b))
        if tape is not None:
            tape.record(out, (a,), lambda g: (g,))
    return out


def mul(a: Tensor, b, tape: Tape | None = None) -> Tensor:
    if isinstance(b, Tensor):
        _check_same_shape("mul", a, b)
        out = Tensor._wrap(a.data * b.data)
        if tape is not None:
            ad, bd = a.data, b.data
            tape.record(out, (a, b), lambda g: (g * bd, g * ad))
    else:
        s = a.dtype.type(b)
        out = Tensor._wrap(a.data * s)
        if tape is not None:
            tape.record(out, (a,), lambda g: (g * s,))
    return out


def max_constant(a: Tensor, c: float, tape: Tape | None = None) -> Tensor:
    """Elementwise max(x, c); c = 0 is the rectifier used at every layer."""
    cval = a.dtype.type(c)
    out = Tensor._wrap(np.maximum(a.data, cval))
    if tape is not None:
        ad = a.data
        tape.record(out, (a,), lambda g: (g * (ad > cval),))
    return out


def relu(a: Tensor, tape: Tape | None = None) -> Tensor:
    return max_constant(a, 0.0, tape)


def matmul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = Tensor._wrap(a.data @ b.data)
    if tape is not None:
        ad, bd = a.data, b.data
        tape.record(out, (a, b), lambda g: (g @ bd.T, ad.T @ g))
    return out


def reshape(a: Tensor, new_shape, tape: Tape | None = None) -> Tensor:
    new_shape = tuple(int(s) for s in new_shape)
    if int(np.prod(new_shape, dtype=np.int64)) != a.size:
        raise ShapeError(f"reshape cannot map shape {a.shape} to {new_shape}")
    out = Tensor._wrap(a.data.reshape(new_shape))
    if tape is not None:
        old = a.shape
        tape.record(out, (a,), lambda g: (g.reshape(old),))
    return out


def transpose(a: Tensor, axes, tape: Tape | None = None) -> Tensor:
    axes = tuple(int(ax) for ax in axes)
    out = Tensor._wrap(np.ascontiguousarray(a.data.transpose(axes)))
    if tape is not None:
        inv = tuple(np.argsort(axes))
        tape.record(out, (a,), lambda g: (np.ascontiguousarray(g.transpose(inv)),))
    return out


def sum_all(a: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor._wrap(np.asarray(a.data.sum(dtype=a.dtype)))
    if tape is not None:
        shape, dt = a.shape, a.dtype
        tape.record(out, (a,), lambda g: (np.full(shape, g, dtype=dt),))
    return out
