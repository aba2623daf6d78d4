"""Reverse-mode automatic differentiation on numpy arrays.

Small tape-free engine in the micrograd style: every operation returns a new
Tensor holding its result, the operands, and a closure that routes the output
gradient back to them. backward() walks the graph once in reverse topological
order. The walk is iterative; recurrent models chain thousands of ops and
would blow the interpreter's recursion limit otherwise.

Every op checks its result for NaN/Inf and raises NumericError on the spot,
so a divergence is reported where it happens instead of three layers later.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import NumericError

Arrayish = "Tensor | np.ndarray | float | int"


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse-mode gradients."""

    __slots__ = ("data", "grad", "requires_grad", "op", "name", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        op: str = "leaf",
        name: str | None = None,
        parents: tuple["Tensor", ...] = (),
    ):
        self.data = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(self.data)):
            raise NumericError(f"non-finite values after {op}"
                               + (f" (tensor {name!r})" if name else ""))
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self.name = name
        self._parents = parents
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- plumbing -------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self):
        tag = self.name or self.op
        return f"Tensor({tag}, shape={self.data.shape})"

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> np.ndarray:
        return self.data

    def backward(self) -> None:
        """Reverse-mode sweep from this (scalar) tensor through the graph."""
        if self.data.size != 1:
            raise NumericError(f"backward() needs a scalar, got shape {self.data.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, int]] = [(self, 0)]
        while stack:  # iterative post-order
            node, child = stack[-1]
            if child < len(node._parents):
                stack[-1] = (node, child + 1)
                parent = node._parents[child]
                if id(parent) not in seen and parent.requires_grad:
                    seen.add(id(parent))
                    stack.append((parent, 0))
            else:
                stack.pop()
                order.append(node)
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = _result(np.add(self.data, other.data), "add", (self, other))

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = _result(-self.data, "neg", (self,))

        def backward(g):
            if self.requires_grad:
                self._accumulate(-g)

        out._backward = backward
        return out

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = _result(np.multiply(self.data, other.data), "mul", (self, other))

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = _result(np.divide(self.data, other.data), "div", (self, other))

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-g * self.data / (other.data * other.data),
                                 other.data.shape)
                )

        out._backward = backward
        return out

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = _result(self.data @ other.data, "matmul", (self, other))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g @ other.data.T)
            if other.requires_grad:
                other._accumulate(self.data.T @ g)

        out._backward = backward
        return out

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = _result(self.data.sum(axis=axis, keepdims=keepdims), "sum", (self,))

        def backward(g):
            if not self.requires_grad:
                return
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.data.shape).copy())
            else:
                expanded = g if keepdims else np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(expanded, self.data.shape).copy())

        out._backward = backward
        return out


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, op: str, parents: tuple[Tensor, ...]) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=requires, op=op,
                  parents=tuple(p for p in parents if p.requires_grad) if requires else ())


# -- elementwise nonlinearities ------------------------------------------------


def exp(x: Tensor) -> Tensor:
    out = _result(np.exp(x.data), "exp", (x,))

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * out.data)

    out._backward = backward
    return out


def log(x: Tensor) -> Tensor:
    out = _result(np.log(x.data), "log", (x,))

    def backward(g):
        if x.requires_grad:
            x._accumulate(g / x.data)

    out._backward = backward
    return out


def tanh(x: Tensor) -> Tensor:
    out = _result(np.tanh(x.data), "tanh", (x,))

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * (1.0 - out.data * out.data))

    out._backward = backward
    return out


def sigmoid(x: Tensor) -> Tensor:
    out = _result(1.0 / (1.0 + np.exp(-x.data)), "sigmoid", (x,))

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * out.data * (1.0 - out.data))

    out._backward = backward
    return out


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    out = _result(np.where(x.data > 0, x.data, slope * x.data), "leaky_relu", (x,))

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * np.where(x.data > 0, 1.0, slope))

    out._backward = backward
    return out


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    out = _result(np.where(x.data > 0, x.data, alpha * (np.exp(x.data) - 1.0)),
                  "elu", (x,))

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * np.where(x.data > 0, 1.0, out.data + alpha))

    out._backward = backward
    return out


# -- structural ops --------------------------------------------------------


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """Row lookup x[index]; duplicate indices sum their gradients."""
    index = np.asarray(index, dtype=np.int64)
    out = _result(x.data[index], "gather_rows", (x,))

    def backward(g):
        if x.requires_grad:
            acc = np.zeros_like(x.data)
            np.add.at(acc, index, g)
            x._accumulate(acc)

    out._backward = backward
    return out


def segment_sum(x: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of x into num_segments buckets keyed by segment_ids."""
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    data = np.zeros((num_segments,) + x.data.shape[1:], dtype=np.float64)
    np.add.at(data, segment_ids, x.data)
    out = _result(data, "segment_sum", (x,))

    def backward(g):
        if x.requires_grad:
            x._accumulate(g[segment_ids])

    out._backward = backward
    return out


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    parts = list(parts)
    out = _result(np.concatenate([p.data for p in parts], axis=0), "concat_rows",
                  tuple(parts))
    offsets = np.cumsum([0] + [p.data.shape[0] for p in parts])

    def backward(g):
        for p, lo, hi in zip(parts, offsets, offsets[1:]):
            if p.requires_grad:
                p._accumulate(g[lo:hi])

    out._backward = backward
    return out


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    out = _result(x.data[start:stop], "slice_rows", (x,))

    def backward(g):
        if x.requires_grad:
            acc = np.zeros_like(x.data)
            acc[start:stop] = g
            x._accumulate(acc)

    out._backward = backward
    return out
