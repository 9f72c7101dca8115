"""Minimal define-by-run reverse-mode autodiff over float64 numpy arrays.

Operations only record onto a tape while one is active::

    with Tape() as tape:
        loss = sum_(log(softmax(x @ w)))
    tape.backward(loss)
    w.grad

Without an active tape the same functions just compute values, so
evaluation code and finite-difference checks share the forward path.
"""
from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Sequence

import numpy as np

from idmne.errors import DegenerateInputError, DimensionError, NumericError

NORM_FLOOR = 1e-12

_active: list["Tape | None"] = []
_tape_ids = itertools.count(1)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "tape_id", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.tape_id: int | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other) if isinstance(other, Tensor) else -np.asarray(other))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


class _Node:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out: Tensor, parents: tuple[Tensor, ...], backward: Callable):
        self.out = out
        self.parents = parents
        self.backward = backward


class Tape:
    """Append-only record of the operations run while it is active."""

    def __init__(self):
        self.id = next(_tape_ids)
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _active.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _active.remove(self)

    def record(self, out: Tensor, parents: tuple[Tensor, ...], backward: Callable) -> None:
        out.tape_id = self.id
        self.nodes.append(_Node(out, parents, backward))

    def backward(self, loss: Tensor) -> None:
        if loss.size != 1:
            raise DimensionError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if loss.tape_id != self.id:
            raise RuntimeError("loss was not produced on this tape")
        for node in self.nodes:
            node.out.grad = None
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            g = node.out.grad
            if g is None:
                continue
            for parent, local in zip(node.parents, node.backward(g)):
                if local is None or not parent.requires_grad:
                    continue
                parent.grad = local if parent.grad is None else parent.grad + local


def active_tape() -> Tape | None:
    return _active[-1] if _active else None


@contextlib.contextmanager
def no_grad():
    """Suspend recording; values computed inside are constants."""
    _active.append(None)
    try:
        yield
    finally:
        _active.pop()


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.tape_id = None
    out.name = ""
    tape = active_tape()
    out.requires_grad = tape is not None and any(p.requires_grad for p in parents)
    if out.requires_grad:
        for p in parents:
            if p.tape_id is not None and p.tape_id != tape.id:
                raise RuntimeError("tensor already belongs to a different tape")
        tape.record(out, parents, backward)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: np.ndarray, b: np.ndarray, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    ad, bd = a.data, b.data
    return _make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {a.shape}")
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,))


def add(a: Tensor, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "add")
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def mul(a: Tensor, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.data, b.data, "mul")
    ad, bd = a.data, b.data
    sa, sb = a.shape, b.shape
    return _make(ad * bd, (a, b), lambda g: (_unbroadcast(g * bd, sa), _unbroadcast(g * ad, sb)))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def log(a: Tensor) -> Tensor:
    if not np.all(a.data > 0):
        raise NumericError("log of a non-positive value; clamp the input first")
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp into [lo, hi]; gradient is zero where the clamp is active."""
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def sum_(a: Tensor, axis: int | None = None) -> Tensor:
    shape = a.shape
    if axis is None:
        return _make(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))
    ax = axis % a.data.ndim

    def backward(g):
        return (np.broadcast_to(np.expand_dims(g, ax), shape).copy(),)

    return _make(a.data.sum(axis=ax), (a,), backward)


def mean(a: Tensor) -> Tensor:
    if a.size == 0:
        raise DimensionError("mean of an empty tensor")
    return scale(sum_(a), 1.0 / a.size)


def take(a: Tensor, rows: Sequence[int] | np.ndarray) -> Tensor:
    """Gather rows along the first axis (repeats allowed)."""
    idx = np.asarray(rows, dtype=np.intp)
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _make(a.data[idx], (a,), backward)


def softmax(z: Tensor) -> Tensor:
    """Softmax along the last axis, with max subtraction."""
    if np.isnan(z.data).any():
        raise NumericError("softmax received NaN input")
    shifted = z.data - z.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    return _make(y, (z,), lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),))


def l2_normalize(f: Tensor, eps: float = NORM_FLOOR) -> Tensor:
    """Scale each vector along the last axis to unit Euclidean norm."""
    norm = np.sqrt((f.data * f.data).sum(axis=-1, keepdims=True))
    if np.any(norm < eps):
        raise DegenerateInputError(f"feature norm below {eps:g}; cannot normalize")
    y = f.data / norm
    return _make(y, (f,), lambda g: ((g - y * (g * y).sum(axis=-1, keepdims=True)) / norm,))


def finite_difference_grad(fn: Callable[[], float], target: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``fn`` w.r.t. every entry of ``target`` (mutated in place, then restored)."""
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn()
        flat[i] = orig - h
        down = fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    diff = np.linalg.norm(np.ravel(analytic) - np.ravel(numeric))
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(diff / denom)
