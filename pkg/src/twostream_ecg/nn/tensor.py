"""A small reverse-mode differentiation engine over numpy arrays."""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from ..errors import GraphError, ShapeError


class Tensor:
    """Array value plus a gradient slot and links to the op that produced it.

    Graph edges are recorded only when at least one input requires a
    gradient, so forward passes over frozen parameters cost nothing extra.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, parents: tuple = (),
                 backward: Callable[[np.ndarray], None] | None = None, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.name = name

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    # -- traversal ------------------------------------------------------------

    def topological_order(self) -> list["Tensor"]:
        """Nodes reachable from self, parents before children."""
        order: list[Tensor] = []
        state: dict[int, int] = {}  # 1 = on the DFS stack, 2 = finished
        stack = [(self, iter(self._parents))]
        state[id(self)] = 1
        while stack:
            node, it = stack[-1]
            for parent in it:
                s = state.get(id(parent))
                if s == 1:
                    raise GraphError("cycle detected in computation graph")
                if s is None and parent.requires_grad:
                    state[id(parent)] = 1
                    stack.append((parent, iter(parent._parents)))
                    break
            else:
                stack.pop()
                state[id(node)] = 2
                order.append(node)
        return order

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Populate ``.grad`` on every node reachable from this one.

        Each node is visited once in reverse topological order; gradients
        add up where a value fans out to several consumers.
        """
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            return
        order = self.topological_order()
        self.accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic -------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def sum(self) -> "Tensor":
        return tsum(self)

    def mean(self) -> "Tensor":
        return tsum(self) * (1.0 / self.data.size)

    def reshape(self, *shape) -> "Tensor":
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make(data: np.ndarray, parents: Iterable[Tensor], backward) -> Tensor:
    """Wrap an op result, recording the graph edge only if needed."""
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward)
    return Tensor(data)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and a.data.size != 1 and b.data.size != 1:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def _fit(g: np.ndarray, t: Tensor) -> np.ndarray:
    # only scalar-vs-array mixing is allowed, so reduce fully when needed
    return g if g.shape == t.shape else np.reshape(g.sum(), t.shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "add")
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate(_fit(g, a))
        if b.requires_grad:
            b.accumulate(_fit(g, b))

    return make(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate(_fit(g * b.data, a))
        if b.requires_grad:
            b.accumulate(_fit(g * a.data, b))

    return make(out_data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        a.accumulate(-g)

    return make(-a.data, (a,), backward)


def tsum(a: Tensor) -> Tensor:
    def backward(g):
        a.accumulate(np.broadcast_to(g, a.shape))

    return make(np.sum(a.data), (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g):
        a.accumulate(g.reshape(a.shape))

    return make(a.data.reshape(shape), (a,), backward)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    datas = [t.data for t in tensors]
    out = np.concatenate(datas, axis=axis)
    bounds = np.cumsum([0] + [d.shape[axis] for d in datas])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate(g[tuple(idx)])

    return make(out, tensors, backward)
