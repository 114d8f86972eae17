"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps a float64 ndarray and records the operations applied
to it; ``backward()`` replays the tape in reverse topological order.  The
primitive set is exactly what the losses in this package need (affine maps,
elementwise nonlinearities, softmax, reductions, gathers, log-gamma, and the
inverse hyperbolic functions used by the distance formulas).  Graphs are
rebuilt per batch and freed afterwards.

Everything is single-threaded and deterministic: identical inputs produce
bitwise-identical outputs and gradients.
"""

from __future__ import annotations

import numpy as np
from scipy.special import digamma, expit, gammaln

from .errors import ContractViolationError

__all__ = [
    "Tensor",
    "constant",
    "concatenate",
    "gather_rows",
    "gather_cols",
]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcasting introduced."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _asarray(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


class Tensor:
    """Node in the computation graph; holds a float64 array and its gradient."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    # Defer mixed ndarray/Tensor arithmetic to our reflected operators instead
    # of letting numpy broadcast Tensors into object arrays.
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = _asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- construction -----------------------------------------------------

    @classmethod
    def _from_op(cls, data, parents, backward) -> "Tensor":
        out = cls(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # -- autodiff ---------------------------------------------------------

    def backward(self):
        """Accumulate gradients of this scalar into every reachable tensor."""
        if self.data.size != 1:
            raise ContractViolationError("backward() requires a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad = self.grad + grad

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = _ensure(other)
        out_data = self.data + other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        return Tensor._from_op(out_data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            self._accumulate(-g)

        return Tensor._from_op(-self.data, (self,), backward)

    def __sub__(self, other):
        return self + (-_ensure(other))

    def __rsub__(self, other):
        return _ensure(other) + (-self)

    def __mul__(self, other):
        other = _ensure(other)
        out_data = self.data * other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        return Tensor._from_op(out_data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _ensure(other)
        out_data = self.data / other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape)
                )

        return Tensor._from_op(out_data, (self, other), backward)

    def __rtruediv__(self, other):
        return _ensure(other) / self

    def __pow__(self, exponent: float):
        if isinstance(exponent, Tensor):
            raise ContractViolationError("tensor exponents are not supported; compose exp/log")
        out_data = self.data**exponent

        def backward(g):
            self._accumulate(g * exponent * self.data ** (exponent - 1.0))

        return Tensor._from_op(out_data, (self,), backward)

    def __matmul__(self, other):
        other = _ensure(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ContractViolationError("matmul is implemented for 2-d operands")
        out_data = self.data @ other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(g @ other.data.T)
            if other.requires_grad:
                other._accumulate(self.data.T @ g)

        return Tensor._from_op(out_data, (self, other), backward)

    def __getitem__(self, index):
        out_data = self.data[index]

        def backward(g):
            full = np.zeros_like(self.data)
            np.add.at(full, index, g)
            self._accumulate(full)

        return Tensor._from_op(out_data, (self,), backward)

    # -- elementwise ------------------------------------------------------

    def exp(self):
        out_data = np.exp(self.data)

        def backward(g):
            self._accumulate(g * out_data)

        return Tensor._from_op(out_data, (self,), backward)

    def log(self):
        def backward(g):
            self._accumulate(g / self.data)

        return Tensor._from_op(np.log(self.data), (self,), backward)

    def sqrt(self):
        out_data = np.sqrt(self.data)

        def backward(g):
            self._accumulate(g * 0.5 / out_data)

        return Tensor._from_op(out_data, (self,), backward)

    def tanh(self):
        out_data = np.tanh(self.data)

        def backward(g):
            self._accumulate(g * (1.0 - out_data * out_data))

        return Tensor._from_op(out_data, (self,), backward)

    def sinh(self):
        def backward(g):
            self._accumulate(g * np.cosh(self.data))

        return Tensor._from_op(np.sinh(self.data), (self,), backward)

    def cosh(self):
        def backward(g):
            self._accumulate(g * np.sinh(self.data))

        return Tensor._from_op(np.cosh(self.data), (self,), backward)

    def relu(self):
        mask = self.data > 0

        def backward(g):
            self._accumulate(g * mask)

        return Tensor._from_op(np.where(mask, self.data, 0.0), (self,), backward)

    def softplus(self):
        out_data = np.logaddexp(0.0, self.data)

        def backward(g):
            self._accumulate(g * expit(self.data))

        return Tensor._from_op(out_data, (self,), backward)

    def lgamma(self):
        def backward(g):
            self._accumulate(g * digamma(self.data))

        return Tensor._from_op(gammaln(self.data), (self,), backward)

    def arcosh(self):
        """Inverse hyperbolic cosine with the argument clamped at 1.

        The clamped region contributes zero gradient (subgradient of the
        clamped function); just above 1 the derivative is large but finite
        and is kept in check by global-norm clipping downstream.
        """
        clamped = np.maximum(self.data, 1.0)
        inside = self.data > 1.0

        def backward(g):
            denom = np.sqrt(np.maximum(self.data * self.data - 1.0, 1e-300))
            self._accumulate(g * np.where(inside, 1.0 / denom, 0.0))

        return Tensor._from_op(np.arccosh(clamped), (self,), backward)

    def artanh(self):
        """Inverse hyperbolic tangent with |argument| clamped below 1."""
        bound = 1.0 - 1e-15
        clamped = np.clip(self.data, -bound, bound)
        inside = np.abs(self.data) < 1.0

        def backward(g):
            self._accumulate(g * np.where(inside, 1.0 / (1.0 - self.data * self.data), 0.0))

        return Tensor._from_op(np.arctanh(clamped), (self,), backward)

    def clamp_min(self, floor: float):
        mask = self.data > floor

        def backward(g):
            self._accumulate(g * mask)

        return Tensor._from_op(np.maximum(self.data, floor), (self,), backward)

    def clamp_max(self, ceil: float):
        mask = self.data < ceil

        def backward(g):
            self._accumulate(g * mask)

        return Tensor._from_op(np.minimum(self.data, ceil), (self,), backward)

    # -- reductions and shaping -------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.data.shape).copy())

        return Tensor._from_op(out_data, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def softmax(self, axis: int):
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out_data = e / e.sum(axis=axis, keepdims=True)

        def backward(g):
            inner = (g * out_data).sum(axis=axis, keepdims=True)
            self._accumulate(out_data * (g - inner))

        return Tensor._from_op(out_data, (self,), backward)

    def reshape(self, *shape):
        out_data = self.data.reshape(*shape)

        def backward(g):
            self._accumulate(g.reshape(self.data.shape))

        return Tensor._from_op(out_data, (self,), backward)

    def transpose(self):
        def backward(g):
            self._accumulate(g.T)

        return Tensor._from_op(self.data.T, (self,), backward)


def _ensure(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def constant(value) -> Tensor:
    """A graph leaf that never receives gradients."""
    return Tensor(value, requires_grad=False)


def concatenate(tensors: list[Tensor], axis: int = -1) -> Tensor:
    tensors = [_ensure(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        pieces = np.split(g, offsets[1:-1], axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t._accumulate(piece)

    return Tensor._from_op(out_data, tuple(tensors), backward)


def gather_rows(t: Tensor, indices) -> Tensor:
    """Select rows ``t[indices]``; the backward pass scatter-adds."""
    idx = np.asarray(indices, dtype=np.intp)
    out_data = t.data[idx]

    def backward(g):
        full = np.zeros_like(t.data)
        np.add.at(full, idx, g)
        t._accumulate(full)

    return Tensor._from_op(out_data, (t,), backward)


def gather_cols(t: Tensor, indices) -> Tensor:
    """Per-row column selection: ``out[i, j] = t[i, indices[i, j]]``."""
    idx = np.asarray(indices, dtype=np.intp)
    if t.data.ndim != 2 or idx.ndim != 2 or idx.shape[0] != t.data.shape[0]:
        raise ContractViolationError("gather_cols expects a 2-d tensor and aligned 2-d indices")
    rows = np.arange(t.data.shape[0])[:, None]
    out_data = t.data[rows, idx]

    def backward(g):
        full = np.zeros_like(t.data)
        np.add.at(full, (rows, idx), g)
        t._accumulate(full)

    return Tensor._from_op(out_data, (t,), backward)
