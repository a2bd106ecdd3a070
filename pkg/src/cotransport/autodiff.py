"""Minimal reverse-mode autodiff on float64 numpy arrays.

The op set is exactly what the policy and critic losses need: add, sub, mul,
neg, scalar div, matmul, tanh, exp, clip, elementwise minimum, sum, mean, and
a fused diagonal-Gaussian log-density. Anything else raises instead of
silently detaching, which is the failure mode this module exists to avoid.

Gradient conventions worth knowing:
  * clip passes gradient only strictly inside (lo, hi); at or beyond either
    bound the gradient is zero.
  * minimum routes gradient to the first argument on exact ties.
"""
from __future__ import annotations

import math
from typing import Callable, Optional, Sequence, Union

import numpy as np

ArrayLike = Union["Tensor", np.ndarray, float, int]

LOG_2PI = math.log(2.0 * math.pi)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
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
    # refuse numpy ufuncs so unsupported math fails loudly instead of
    # producing a plain ndarray outside the tape
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False,
                 parents: Sequence["Tensor"] = (),
                 backward_fn: Optional[Callable[[np.ndarray], None]] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents = tuple(parents)
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # -- graph plumbing ----------------------------------------------------

    def _accum(self, g: np.ndarray) -> None:
        g = _unbroadcast(np.asarray(g, dtype=np.float64), self.data.shape)
        self.grad = g if self.grad is None else self.grad + g

    def backward(self) -> None:
        if self.data.shape != ():
            raise ValueError("backward() needs a scalar loss")
        order: list[Tensor] = []
        seen = set()

        def visit(node: "Tensor"):
            if id(node) in seen:
                return
            seen.add(id(node))
            for p in node._parents:
                visit(p)
            order.append(node)

        visit(self)
        self.grad = np.asarray(1.0)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # -- elementwise arithmetic -------------------------------------------

    def __add__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.data + other.data, parents=(self, other))

        def bk(g):
            self._accum(g)
            other._accum(g)
        out._backward_fn = bk
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = Tensor(-self.data, parents=(self,))
        out._backward_fn = lambda g: self._accum(-g)
        return out

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.data * other.data, parents=(self, other))

        def bk(g):
            self._accum(g * other.data)
            other._accum(g * self.data)
        out._backward_fn = bk
        return out

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        if isinstance(other, Tensor) or isinstance(other, np.ndarray):
            raise TypeError("division by a tensor is not in the op set; "
                            "multiply by a reciprocal constant instead")
        return self * (1.0 / float(other))

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.data @ other.data, parents=(self, other))

        def bk(g):
            self._accum(g @ other.data.T)
            other._accum(self.data.T @ g)
        out._backward_fn = bk
        return out

    # -- nonlinearities and shaping ---------------------------------------

    def tanh(self) -> "Tensor":
        y = np.tanh(self.data)
        out = Tensor(y, parents=(self,))
        out._backward_fn = lambda g: self._accum(g * (1.0 - y * y))
        return out

    def exp(self) -> "Tensor":
        y = np.exp(self.data)
        out = Tensor(y, parents=(self,))
        out._backward_fn = lambda g: self._accum(g * y)
        return out

    def clip(self, lo: float, hi: float) -> "Tensor":
        if not lo < hi:
            raise ValueError(f"clip needs lo < hi, got [{lo}, {hi}]")
        mask = (self.data > lo) & (self.data < hi)
        out = Tensor(np.clip(self.data, lo, hi), parents=(self,))
        out._backward_fn = lambda g: self._accum(g * mask)
        return out

    def sum(self, axis: Optional[int] = None) -> "Tensor":
        out = Tensor(self.data.sum(axis=axis), parents=(self,))

        def bk(g):
            if axis is None:
                self._accum(np.broadcast_to(g, self.data.shape))
            else:
                self._accum(np.broadcast_to(np.expand_dims(g, axis), self.data.shape))
        out._backward_fn = bk
        return out

    def mean(self, axis: Optional[int] = None) -> "Tensor":
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) / n

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def item(self) -> float:
        return float(self.data)


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def minimum(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Elementwise min; gradient follows the winning side, ties go to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data <= b.data
    out = Tensor(np.where(take_a, a.data, b.data), parents=(a, b))

    def bk(g):
        a._accum(g * take_a)
        b._accum(g * ~take_a)
    out._backward_fn = bk
    return out


def gaussian_logprob(mean: Tensor, log_std: Tensor, actions: np.ndarray) -> Tensor:
    """Diagonal-Gaussian log density, summed over the action axis.

    Fused single node: gradients flow to the mean and to log_std, never to
    the sampled actions.
    """
    actions = np.asarray(actions, dtype=np.float64)
    std = np.exp(log_std.data)
    z = (actions - mean.data) / std
    val = (-0.5 * z * z - log_std.data - 0.5 * LOG_2PI).sum(axis=-1)
    out = Tensor(val, parents=(mean, log_std))

    def bk(g):
        g = np.expand_dims(g, -1)
        mean._accum(g * z / std)
        log_std._accum(g * (z * z - 1.0))
    out._backward_fn = bk
    return out


def check_gradients(build: Callable[[Sequence[np.ndarray]], "Tensor"],
                    params: Sequence[np.ndarray], h: float = 1e-5) -> float:
    """Worst relative error of backprop against central finite differences.

    ``build`` maps concrete parameter arrays to a scalar loss Tensor; the
    leaf Tensors it creates must appear in the same order as ``params``.
    """
    leaves = [Tensor(p.copy(), requires_grad=True) for p in params]
    loss = build(leaves)
    loss.backward()
    worst = 0.0
    for k, leaf in enumerate(leaves):
        grad = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        flat = leaf.data.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = build(leaves).item()
            flat[i] = orig - h
            dn = build(leaves).item()
            flat[i] = orig
            fd = (up - dn) / (2.0 * h)
            denom = max(abs(gflat[i]), abs(fd), 1e-6)
            worst = max(worst, abs(gflat[i] - fd) / denom)
    return worst
