"""Reverse-mode automatic differentiation over numpy arrays.

A small tape-based engine: each :class:`Tensor` wraps a float64 ndarray
together with a closure that routes its output gradient to its parents.
Graphs are built eagerly by the overloaded operators and the module-level
functions below, and ``Tensor.backward`` replays them in reverse
topological order.

Everything runs single-threaded on numpy, so two runs over identical
inputs produce bit-for-bit identical values and gradients. Constants
(tensors with ``requires_grad=False`` and no differentiable parents) are
pruned from the tape at construction time, which keeps large masked or
padded graphs cheap.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.sparse as sp

Array = np.ndarray


def _as_array(x) -> Array:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: Array, shape: tuple) -> Array:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Node in the autodiff tape: a float64 array plus gradient plumbing."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    # Make numpy defer mixed ndarray-Tensor arithmetic to our operators
    # instead of broadcasting over the Tensor as an opaque object.
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=None):
        self.data = _as_array(data)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self._parents = tuple(p for p in parents if p.requires_grad)
        self._backward = backward if self._parents or requires_grad else None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def accumulate(self, g: Array) -> None:
        if not self.requires_grad:
            return
        g = _unbroadcast(g, self.data.shape)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def backward(self, grad: Array | None = None) -> None:
        """Backpropagate from this node, accumulating into leaf ``.grad``s.

        Intermediate gradients are freed as soon as they have been
        propagated; only leaves (parameter tensors) keep theirs.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without an explicit gradient needs a scalar output")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.accumulate(_as_array(grad))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    node.grad = None

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name=None) -> Tensor:
    """A leaf tensor that accumulates gradients."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


# -- arithmetic -------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data, parents=(a, b))

    def backward(g):
        a.accumulate(g)
        b.accumulate(g)

    out._backward = backward
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data, parents=(a, b))

    def backward(g):
        a.accumulate(g)
        b.accumulate(-g)

    out._backward = backward
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data, parents=(a, b))

    def backward(g):
        a.accumulate(g * b.data)
        b.accumulate(g * a.data)

    out._backward = backward
    return out


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data / b.data, parents=(a, b))

    def backward(g):
        a.accumulate(g / b.data)
        b.accumulate(-g * a.data / (b.data * b.data))

    out._backward = backward
    return out


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    e = float(exponent)
    out = Tensor(a.data**e, parents=(a,))

    def backward(g):
        a.accumulate(g * e * a.data ** (e - 1.0))

    out._backward = backward
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul supports 2-D operands only")
    out = Tensor(a.data @ b.data, parents=(a, b))

    def backward(g):
        a.accumulate(g @ b.data.T)
        b.accumulate(a.data.T @ g)

    out._backward = backward
    return out


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ValueError("transpose supports 2-D tensors only")
    out = Tensor(a.data.T, parents=(a,))

    def backward(g):
        a.accumulate(g.T)

    out._backward = backward
    return out


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape), parents=(a,))

    def backward(g):
        a.accumulate(g.reshape(a.data.shape))

    out._backward = backward
    return out


def sum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), parents=(a,))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(g, a.data.shape))

    out._backward = backward
    return out


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


# -- elementwise nonlinearities ---------------------------------------------


def _unary(a, value: Array, dfunc) -> Tensor:
    out = Tensor(value, parents=(a,))

    def backward(g):
        a.accumulate(g * dfunc())

    out._backward = backward
    return out


def relu(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, np.maximum(a.data, 0.0), lambda: (a.data > 0.0).astype(np.float64))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)
    return _unary(a, out_data, lambda: out_data)


def log(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, np.log(a.data), lambda: 1.0 / a.data)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.sqrt(a.data)
    return _unary(a, out_data, lambda: 0.5 / out_data)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)
    return _unary(a, out_data, lambda: 1.0 - out_data * out_data)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out_data = 1.0 / (1.0 + np.exp(-a.data))
    return _unary(a, out_data, lambda: out_data * (1.0 - out_data))


def cosh(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, np.cosh(a.data), lambda: np.sinh(a.data))


def sinh(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, np.sinh(a.data), lambda: np.cosh(a.data))


def arcsinh(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, np.arcsinh(a.data), lambda: 1.0 / np.sqrt(1.0 + a.data * a.data))


def arccosh(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, np.arccosh(a.data), lambda: 1.0 / np.sqrt(a.data * a.data - 1.0))


def arctanh(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, np.arctanh(a.data), lambda: 1.0 / (1.0 - a.data * a.data))


def maximum(a, b) -> Tensor:
    """Elementwise max; at ties the gradient goes to the first argument."""
    a, b = as_tensor(a), as_tensor(b)
    mask = a.data >= b.data
    out = Tensor(np.where(mask, a.data, b.data), parents=(a, b))

    def backward(g):
        a.accumulate(g * mask)
        b.accumulate(g * ~mask)

    out._backward = backward
    return out


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    mask = a.data <= b.data
    out = Tensor(np.where(mask, a.data, b.data), parents=(a, b))

    def backward(g):
        a.accumulate(g * mask)
        b.accumulate(g * ~mask)

    out._backward = backward
    return out


# -- shape and indexing ------------------------------------------------------


def concatenate(parts: Sequence, axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis), parents=tuple(parts))
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis if axis >= 0 else g.ndim + axis] = slice(lo, hi)
            p.accumulate(g[tuple(idx)])

    out._backward = backward
    return out


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(
        isinstance(i, (int, np.integer, slice)) or i is Ellipsis or i is None for i in items
    )


def take(a, idx) -> Tensor:
    """Index with basic slices or integer arrays; gradient scatters back.

    Basic (slice/int) indices cannot alias, so their gradient uses a plain
    in-place add; integer-array indices go through np.add.at to accumulate
    duplicates correctly.
    """
    a = as_tensor(a)
    out = Tensor(a.data[idx], parents=(a,))
    basic = _is_basic_index(idx)

    def backward(g):
        buf = np.zeros_like(a.data)
        if basic:
            buf[idx] += g
        else:
            np.add.at(buf, idx, g)
        a.accumulate(buf)

    out._backward = backward
    return out


def take_rows(table, indices: Array) -> Tensor:
    """Embedding lookup: rows of a 2-D table selected by an int array."""
    table = as_tensor(table)
    indices = np.asarray(indices)
    out = Tensor(table.data[indices], parents=(table,))

    def backward(g):
        buf = np.zeros_like(table.data)
        np.add.at(buf, indices, g)
        table.accumulate(buf)

    out._backward = backward
    return out


def sparse_matmul(mat: sp.spmatrix, x, mat_t: sp.spmatrix | None = None) -> Tensor:
    """Multiply a constant sparse matrix by a dense tensor.

    `mat_t` is the precomputed transpose; pass it when the product sits on
    a hot training path to avoid re-transposing every backward pass.
    """
    x = as_tensor(x)
    out = Tensor(mat @ x.data, parents=(x,))
    if mat_t is None:
        mat_t = mat.T.tocsr()

    def backward(g):
        x.accumulate(mat_t @ g)

    out._backward = backward
    return out
