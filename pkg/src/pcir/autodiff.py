"""Dense float64 tensors with reverse-mode automatic differentiation.

A `Tensor` is a node in a dynamically recorded computation graph: applying
an operation caches the forward value and a closure that propagates the
root gradient to the operands.  `backward` on a scalar root replays the
recorded nodes in reverse topological order and accumulates gradients into
every reachable tensor, exactly (no approximation beyond float64
arithmetic).  Graphs are single-writer; a finished graph and its leaves
may be read from any number of threads.

Every public operation validates that its result is finite.  NaN or Inf
anywhere is treated as a bug in the caller's loss, not a value to
propagate, and raises `NonFiniteError`.

Supported operations: add, sub, mul (with numpy broadcasting), matmul,
sum, mean, square, sqrt, exp, tanh, relu, negate, scale (by a Python
scalar), concat, slicing, and 2-D transpose.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or Inf."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


def _check_finite(data: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite value produced by op '{op}'")
    return data


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A float64 array plus its place in the recorded graph."""

    __slots__ = ("data", "grad", "op", "_parents", "_backward")

    def __init__(self, data, op: str = "leaf",
                 parents: tuple["Tensor", ...] = (),
                 backward: Callable[[np.ndarray], None] | None = None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = _check_finite(arr, op)
        self.grad: np.ndarray | None = None
        self.op = op
        self._parents = parents
        self._backward = backward

    # -- bookkeeping ---------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Reverse-mode pass from a scalar root.

        Populates `.grad` on every tensor in the graph; leaf gradients have
        the shape of their values.
        """
        if self.data.size != 1:
            raise ShapeError("backward requires a scalar root")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape})"

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return negate(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return narrow(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    """A leaf that participates in the graph but never needs a gradient."""
    return as_tensor(x)


# -- elementwise binary ops ---------------------------------------------

def _binary(a, b, op: str, fwd, da, db) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = fwd(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape}: {exc}") from exc

    def backward(g: np.ndarray) -> None:
        a._accumulate(_unbroadcast(da(g, a.data, b.data), a.shape))
        b._accumulate(_unbroadcast(db(g, a.data, b.data), b.shape))

    return Tensor(data, op, (a, b), backward)


def add(a, b) -> Tensor:
    return _binary(a, b, "add", np.add,
                   lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Tensor:
    return _binary(a, b, "sub", np.subtract,
                   lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    return _binary(a, b, "mul", np.multiply,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


def matmul(a, b) -> Tensor:
    """2-D @ 2-D or 2-D @ 1-D matrix product."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim not in (1, 2):
        raise ShapeError(f"matmul: unsupported ranks {a.data.ndim} @ {b.data.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g: np.ndarray) -> None:
        if b.data.ndim == 2:
            a._accumulate(g @ b.data.T)
            b._accumulate(a.data.T @ g)
        else:
            a._accumulate(np.outer(g, b.data))
            b._accumulate(a.data.T @ g)

    return Tensor(data, "matmul", (a, b), backward)


# -- elementwise unary ops ------------------------------------------------

def _unary(a, op: str, fwd, dfn) -> Tensor:
    a = as_tensor(a)
    data = fwd(a.data)

    def backward(g: np.ndarray) -> None:
        a._accumulate(dfn(g, a.data, data))

    return Tensor(data, op, (a,), backward)


def square(a) -> Tensor:
    return _unary(a, "square", np.square, lambda g, x, y: g * 2.0 * x)


def sqrt(a) -> Tensor:
    return _unary(a, "sqrt", np.sqrt, lambda g, x, y: g * 0.5 / y)


def exp(a) -> Tensor:
    return _unary(a, "exp", np.exp, lambda g, x, y: g * y)


def tanh(a) -> Tensor:
    return _unary(a, "tanh", np.tanh, lambda g, x, y: g * (1.0 - y * y))


def relu(a) -> Tensor:
    return _unary(a, "relu", lambda x: np.maximum(x, 0.0),
                  lambda g, x, y: g * (x > 0.0))


def negate(a) -> Tensor:
    return _unary(a, "negate", np.negative, lambda g, x, y: -g)


def scale(a, c: float) -> Tensor:
    """Multiply by a Python scalar constant (not differentiated through c)."""
    c = float(c)
    return _unary(a, "scale", lambda x: x * c, lambda g, x, y: g * c)


# -- reductions -----------------------------------------------------------

def tsum(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g: np.ndarray) -> None:
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(ge, a.shape).copy())

    return Tensor(data, "sum", (a,), backward)


def tmean(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# -- structural ops --------------------------------------------------------

def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError("transpose expects a 2-D tensor")

    def backward(g: np.ndarray) -> None:
        a._accumulate(g.T)

    return Tensor(a.data.T.copy(), "transpose", (a,), backward)


def concat(parts: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(p) for p in parts]
    if not ts:
        raise ShapeError("concat of zero tensors")
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward(g: np.ndarray) -> None:
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t._accumulate(g[tuple(idx)])

    return Tensor(data, "concat", tuple(ts), backward)


def narrow(a, key) -> Tensor:
    """Basic slicing; the gradient scatters back into the sliced region."""
    a = as_tensor(a)
    data = a.data[key]

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(a.data)
        full[key] = g
        a._accumulate(full)

    return Tensor(np.array(data, dtype=np.float64), "slice", (a,), backward)


# -- convenience ------------------------------------------------------------

def gradients(root: Tensor, leaves: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradient of a scalar root with respect to each leaf, zeroing first."""
    leaves = list(leaves)
    stack = [root]
    seen: set[int] = set()
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        node.grad = None
        stack.extend(node._parents)
    root.backward()
    return [np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad
            for leaf in leaves]
