"""Reverse-mode automatic differentiation over float64 numpy arrays.

The model code in this package needs gradients through a small closed set of
operations (GCN layers, feature-wise modulation, the link objective), so the
tape is deliberately minimal: a Tensor wraps an ndarray, records its parents
and a backward closure, and `backward()` walks the graph once in reverse
topological order.  All values are float64; sparse matrices participate only
as constant left operands of `spmm`.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .rng import RandomSource


class ShapeError(ValueError):
    """Operands with incompatible shapes."""


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """A float64 array with optional gradient bookkeeping.

    Tensors built from operations on tracked tensors carry `_parents` and a
    `_backward` closure mapping the output gradient to parent gradients.
    Leaves created with requires_grad=True accumulate into `.grad`.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = _as_f64(data)
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self.grad = None
        # Parents are only kept when gradients can flow; constants stay leaf-like.
        self._parents = tuple(_parents) if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every tracked leaf."""
        if self.data.shape != ():
            raise ShapeError(f"backward() needs a scalar, got shape {self.data.shape}")
        if not self.requires_grad:
            raise ValueError("backward() on a tensor with no tracked parents")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        # Iterative DFS: loss graphs over whole-epoch batches can exceed the
        # recursion limit.
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        flowing: dict[int, np.ndarray] = {id(self): np.ones((), dtype=np.float64)}
        for node in reversed(order):
            out_grad = flowing.pop(id(node), None)
            if out_grad is None:
                continue
            if node._backward is None:
                node.grad = out_grad if node.grad is None else node.grad + out_grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward(out_grad)):
                if not parent.requires_grad or parent_grad is None:
                    continue
                key = id(parent)
                if key in flowing:
                    flowing[key] = flowing[key] + parent_grad
                else:
                    flowing[key] = parent_grad

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __sub__(self, other):
        return add(self, mul(other, constant(-1.0)))

    def __neg__(self):
        return affine(self, -1.0, 0.0)

    def __repr__(self) -> str:
        tag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{tag})"


def constant(value) -> Tensor:
    return Tensor(value)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, inverting numpy broadcasting."""
    grad = np.asarray(grad, dtype=np.float64)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from exc

    def backward(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))

    return Tensor(out, _parents=(a, b), _backward=backward)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from exc

    def backward(g):
        return (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape))

    return Tensor(out, _parents=(a, b), _backward=backward)


def affine(x, scale: float, shift: float) -> Tensor:
    """scale * x + shift with python-float coefficients."""
    x = _wrap(x)
    scale = float(scale)

    def backward(g):
        return (g * scale,)

    return Tensor(scale * x.data + float(shift), _parents=(x,), _backward=backward)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data

    def backward(g):
        return (g @ b.data.T, a.data.T @ g)

    return Tensor(out, _parents=(a, b), _backward=backward)


def spmm(a_sparse, x) -> Tensor:
    """Sparse constant matrix times dense tracked tensor."""
    if not sp.issparse(a_sparse):
        raise TypeError("spmm expects a scipy sparse left operand")
    x = _wrap(x)
    if x.ndim != 2 or a_sparse.shape[1] != x.shape[0]:
        raise ShapeError(f"spmm: incompatible shapes {a_sparse.shape} and {x.shape}")
    a_csr = a_sparse.tocsr()
    out = a_csr @ x.data

    def backward(g):
        return (a_csr.T @ g,)

    return Tensor(np.asarray(out), _parents=(x,), _backward=backward)


def gather_rows(x, index) -> Tensor:
    """Select rows of a 2D tensor; gradients scatter-add back."""
    x = _wrap(x)
    if x.ndim != 2:
        raise ShapeError(f"gather_rows: expected 2D input, got {x.shape}")
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError("gather_rows: index must be 1D")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise IndexError(f"gather_rows: index out of range for {x.shape[0]} rows")
    out = x.data[idx]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor(out, _parents=(x,), _backward=backward)


def relu(x) -> Tensor:
    x = _wrap(x)
    out = np.maximum(x.data, 0.0)

    def backward(g):
        return (g * (x.data > 0.0),)

    return Tensor(out, _parents=(x,), _backward=backward)


def sigmoid(x) -> Tensor:
    x = _wrap(x)
    # Stable on both tails: exp of a non-positive argument only.
    out = np.where(x.data >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(x.data))),
                   np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))))

    def backward(g):
        return (g * out * (1.0 - out),)

    return Tensor(out, _parents=(x,), _backward=backward)


def softplus(x) -> Tensor:
    """log(1 + exp(x)), computed as logaddexp(0, x) for stability."""
    x = _wrap(x)
    out = np.logaddexp(0.0, x.data)

    def backward(g):
        s = np.where(x.data >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(x.data))),
                     np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))))
        return (g * s,)

    return Tensor(out, _parents=(x,), _backward=backward)


def tsum(x, axis=None) -> Tensor:
    x = _wrap(x)
    out = x.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return Tensor(out, _parents=(x,), _backward=backward)


def tmean(x, axis=None) -> Tensor:
    x = _wrap(x)
    if x.data.size == 0:
        raise ShapeError("mean of an empty tensor")
    count = x.data.size if axis is None else x.shape[axis]
    return affine(tsum(x, axis=axis), 1.0 / count, 0.0)


def dot(a, b) -> Tensor:
    """Inner product of two 1D tensors."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot: expected matching 1D shapes, got {a.shape} and {b.shape}")
    out = a.data @ b.data

    def backward(g):
        return (g * b.data, g * a.data)

    return Tensor(out, _parents=(a, b), _backward=backward)


def row_dot(a, b) -> Tensor:
    """Row-wise inner products of two (M, d) tensors, returning shape (M,)."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or a.shape != b.shape:
        raise ShapeError(f"row_dot: expected matching 2D shapes, got {a.shape} and {b.shape}")
    out = np.einsum("ij,ij->i", a.data, b.data)

    def backward(g):
        return (g[:, None] * b.data, g[:, None] * a.data)

    return Tensor(out, _parents=(a, b), _backward=backward)


def squared_norm(x) -> Tensor:
    """Sum of squared entries as a scalar."""
    x = _wrap(x)
    out = np.float64((x.data * x.data).sum())

    def backward(g):
        return (2.0 * g * x.data,)

    return Tensor(out, _parents=(x,), _backward=backward)


def gaussian(source: RandomSource, shape) -> Tensor:
    """Constant tensor of standard normal draws from `source`."""
    return Tensor(source.normal(shape))


class ParamStore:
    """Named float64 parameter tensors with gradient slots.

    Names are unique and iteration follows insertion order, which fixes the
    layout used by optimizers and checkpoints.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name: {name!r}")
        t = Tensor(value, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state(self) -> dict[str, np.ndarray]:
        """Copies of the current values, keyed by name."""
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, t in self._params.items():
            value = _as_f64(state[name])
            if value.shape != t.data.shape:
                raise ShapeError(f"parameter {name!r}: shape {value.shape} != {t.data.shape}")
            t.data = value.copy()

    def num_values(self) -> int:
        return sum(t.data.size for t in self._params.values())


def gradient(loss_builder, params: ParamStore) -> dict[str, np.ndarray]:
    """Evaluate `loss_builder()` and return d(loss)/d(param) for every name.

    The builder must construct a scalar Tensor from the live parameter
    tensors.  Parameters the loss does not touch get zero gradients.
    """
    params.zero_grad()
    loss = loss_builder()
    if not isinstance(loss, Tensor):
        raise TypeError("loss_builder must return a Tensor")
    loss.backward()
    return {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }
