"""Minimal reverse-mode differentiation over dense float64 arrays.

A :class:`Tape` records every primitive applied to its :class:`Node` objects
in creation order, so the node list is already topologically sorted and the
backward pass is one reverse sweep.  Node values may be scalars (0-d arrays),
vectors or batches of vectors; elementwise primitives broadcast like numpy
and their adjoints are summed back to the operand shape.

    tape = Tape()
    x = tape.var(2.0)
    y = tape.var(3.0)
    grads = tape.backward(x * y)    # {x.index: 3.0, y.index: 2.0}
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

LN_CLAMP = 1e-12
# Subgradient of relu at exactly 0.  Keeps the differential-mode gate closed
# (and flat) at K_mode = 0.
RELU_GRAD_AT_ZERO = 0.0

ArrayLike = "float | Sequence[float] | np.ndarray"


class DomainError(ValueError):
    """A primitive received an operand outside its domain."""

    def __init__(self, op: str, node_index: int, detail: str):
        self.op = op
        self.node_index = node_index
        super().__init__(f"{op}: {detail} (operand node #{node_index})")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Node:
    __slots__ = ("tape", "index", "value", "parents", "vjp", "op")

    def __init__(self, tape: "Tape", index: int, value: np.ndarray,
                 parents: tuple["Node", ...], vjp: Callable | None, op: str):
        self.tape = tape
        self.index = index
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def is_leaf(self) -> bool:
        return not self.parents

    def item(self) -> float:
        return float(self.value.item())

    def __repr__(self) -> str:
        return f"Node(#{self.index}, {self.op}, value={self.value!r})"

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
        return neg(self)

    def __getitem__(self, idx):
        return getitem(self, idx)


class Tape:
    """Append-only record of primitive operations."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.adjoints: list[np.ndarray] | None = None

    def __len__(self) -> int:
        return len(self.nodes)

    def _record(self, value, parents: tuple[Node, ...], vjp, op: str) -> Node:
        value = np.asarray(value, dtype=np.float64)
        value.setflags(write=False)
        node = Node(self, len(self.nodes), value, parents, vjp, op)
        self.nodes.append(node)
        return node

    def var(self, value) -> Node:
        """Leaf node.  The value is copied, so later mutation of the source
        array does not alter the recorded forward pass."""
        return self._record(np.array(value, dtype=np.float64), (), None, "leaf")

    const = var

    def lift(self, value) -> Node:
        return value if isinstance(value, Node) else self.var(value)

    def backward(self, root: Node) -> dict[int, np.ndarray]:
        """Populate adjoints from a scalar root; return leaf index -> gradient."""
        if root.tape is not self:
            raise ValueError("root belongs to a different tape")
        if root.value.ndim != 0:
            raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
        adj: list[np.ndarray | None] = [None] * len(self.nodes)
        adj[root.index] = np.ones((), dtype=np.float64)
        for i in range(root.index, -1, -1):
            g = adj[i]
            node = self.nodes[i]
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None:
                    continue
                pg = _unbroadcast(np.asarray(pg, dtype=np.float64), parent.shape)
                if adj[parent.index] is None:
                    adj[parent.index] = pg
                else:
                    adj[parent.index] = adj[parent.index] + pg
        self.adjoints = [
            np.zeros(n.shape) if a is None else a for n, a in zip(self.nodes, adj)
        ]
        return {n.index: self.adjoints[n.index] for n in self.nodes if n.is_leaf}

    def grad(self, root: Node, wrt: Sequence[Node]) -> list[np.ndarray]:
        leaf_grads = self.backward(root)
        return [leaf_grads.get(n.index, self.adjoints[n.index]) for n in wrt]


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    raise TypeError("at least one operand must be a Node")


def _lift_all(*xs) -> tuple[Tape, list[Node]]:
    tape = _tape_of(*xs)
    nodes = []
    for x in xs:
        if isinstance(x, Node):
            if x.tape is not tape:
                raise ValueError("operands live on different tapes")
            nodes.append(x)
        else:
            nodes.append(tape.var(x))
    return tape, nodes


# -- elementwise binary ------------------------------------------------------

def add(a, b) -> Node:
    tape, (a, b) = _lift_all(a, b)
    return tape._record(a.value + b.value, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Node:
    tape, (a, b) = _lift_all(a, b)
    return tape._record(a.value - b.value, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Node:
    tape, (a, b) = _lift_all(a, b)
    av, bv = a.value, b.value
    return tape._record(av * bv, (a, b), lambda g: (g * bv, g * av), "mul")


def div(a, b) -> Node:
    tape, (a, b) = _lift_all(a, b)
    av, bv = a.value, b.value
    if np.any(bv == 0.0):
        raise DomainError("div", b.index, "division by zero")
    out = av / bv
    return tape._record(out, (a, b), lambda g: (g / bv, -g * out / bv), "div")


# -- elementwise unary -------------------------------------------------------

def neg(x: Node) -> Node:
    return x.tape._record(-x.value, (x,), lambda g: (-g,), "neg")


def exp(x: Node) -> Node:
    out = np.exp(x.value)
    return x.tape._record(out, (x,), lambda g: (g * out,), "exp")


def log(x: Node) -> Node:
    """Natural log with inputs in [0, LN_CLAMP) raised to LN_CLAMP.

    Negative or NaN operands are a hard error.  The clamp is flat, so clamped
    entries receive zero gradient.
    """
    v = x.value
    if np.any(np.isnan(v)) or np.any(v < 0.0):
        raise DomainError("ln", x.index, f"non-positive operand {v.min()!r}")
    clamped = v < LN_CLAMP
    safe = np.where(clamped, LN_CLAMP, v)
    out = np.log(safe)
    return x.tape._record(out, (x,), lambda g: (np.where(clamped, 0.0, g / safe),), "ln")


ln = log


def sigmoid(x: Node) -> Node:
    out = expit(x.value)
    return x.tape._record(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(x: Node) -> Node:
    v = x.value
    out = np.logaddexp(0.0, v)
    return x.tape._record(out, (x,), lambda g: (g * expit(v),), "softplus")


def relu(x: Node) -> Node:
    v = x.value

    def vjp(g):
        slope = np.where(v > 0.0, 1.0, np.where(v == 0.0, RELU_GRAD_AT_ZERO, 0.0))
        return (g * slope,)

    return x.tape._record(np.maximum(v, 0.0), (x,), vjp, "relu")


def log_sigmoid(x: Node) -> Node:
    # -softplus(-x); ln(sigmoid(x)) underflows for x << 0.
    return neg(softplus(neg(x)))


# -- linear algebra and reductions ------------------------------------------

def matvec(w: Node, x: Node) -> Node:
    """``W @ x`` for W [out, in] and x [..., in] (batched over leading axes)."""
    tape, (w, x) = _lift_all(w, x)
    wv, xv = w.value, x.value
    if wv.ndim != 2 or xv.shape[-1] != wv.shape[1]:
        raise ValueError(f"matvec shape mismatch: {wv.shape} @ {xv.shape}")

    def vjp(g):
        gw = g.reshape(-1, wv.shape[0]).T @ xv.reshape(-1, wv.shape[1])
        return gw, g @ wv

    return tape._record(xv @ wv.T, (w, x), vjp, "matvec")


def dot(a, b) -> Node:
    """Inner product over the last axis."""
    tape, (a, b) = _lift_all(a, b)
    av, bv = a.value, b.value
    if av.shape[-1:] != bv.shape[-1:]:
        raise ValueError(f"dot length mismatch: {av.shape} vs {bv.shape}")
    out = (av * bv).sum(axis=-1)

    def vjp(g):
        g = np.expand_dims(g, -1)
        return g * bv, g * av

    return tape._record(out, (a, b), vjp, "dot")


def sum(x: Node, axis: int | None = None) -> Node:  # noqa: A001
    v = x.value

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, v.shape),)

    return x.tape._record(v.sum(axis=axis), (x,), vjp, "sum")


def mean(x: Node, axis: int | None = None) -> Node:
    n = x.value.size if axis is None else x.value.shape[axis]
    return sum(x, axis) / float(n)


def softmax(x: Node) -> Node:
    """Softmax over the last axis."""
    v = x.value
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return x.tape._record(out, (x,), vjp, "softmax")


def logsumexp(x: Node) -> Node:
    """log(sum(exp(x))) over the last axis, shifted by the (constant) max."""
    shift = x.value.max(axis=-1, keepdims=True)
    return log(sum(exp(x - shift), axis=-1)) + shift[..., 0]


def max_index(x: Node) -> Node:
    """Argmax over the last axis.  Not differentiable: adjoint is zero."""
    out = np.argmax(x.value, axis=-1).astype(np.float64)
    return x.tape._record(out, (x,), lambda g: (None,), "max_index")


argmax = max_index


# -- shape plumbing ----------------------------------------------------------

def getitem(x: Node, idx) -> Node:
    v = x.value

    def vjp(g):
        out = np.zeros_like(v)
        np.add.at(out, idx, g)
        return (out,)

    return x.tape._record(v[idx], (x,), vjp, "getitem")


def take(x: Node, index: int) -> Node:
    """Element ``index`` of the last axis."""
    return getitem(x, (..., index))


def pick(x: Node, labels: np.ndarray) -> Node:
    """Row-wise gather ``x[i, labels[i]]`` for x [B, C] (or x[labels] for 1-d)."""
    labels = np.asarray(labels, dtype=np.intp)
    if x.value.ndim == 1:
        return getitem(x, (labels,) if labels.ndim else int(labels))
    return getitem(x, (np.arange(x.value.shape[0]), labels))


def reshape(x: Node, shape: tuple[int, ...]) -> Node:
    v = x.value
    return x.tape._record(v.reshape(shape), (x,), lambda g: (g.reshape(v.shape),), "reshape")


def unsqueeze(x: Node) -> Node:
    """Append a trailing length-1 axis (for broadcasting per-sample scalars)."""
    return reshape(x, x.shape + (1,))


def concat(xs: Sequence[Node], axis: int = -1) -> Node:
    tape, xs = _lift_all(*xs)
    values = [n.value for n in xs]
    out = np.concatenate(values, axis=axis)
    bounds = np.cumsum([v.shape[axis] for v in values])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return tape._record(out, tuple(xs), vjp, "concat")


def broadcast_to(x: Node, shape: tuple[int, ...]) -> Node:
    v = x.value
    return x.tape._record(np.broadcast_to(v, shape), (x,), lambda g: (g,), "broadcast")
