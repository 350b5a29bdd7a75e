"""Reverse-mode differentiation over dense float64 matrices.

Every value is a 2-D ``numpy.ndarray`` of dtype float64. Operators build
:class:`Node` objects that remember their parents and a vector-Jacobian rule.
Rules are written once against a small array namespace so the same rule can run
either on raw arrays (ordinary backward pass) or on nodes (``create_graph=True``),
which is what makes gradient-of-gradient terms such as a gradient penalty work.

Broadcasting is limited to row vectors (1 x n), column vectors (m x 1) and
1 x 1 scalars combined with an m x n operand.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for an operator."""


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Evaluate operators without recording parents (pure forward evaluation)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def as_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got shape {arr.shape}")
    return arr


class Node:
    """A value in the computation graph together with its accumulated gradient."""

    __slots__ = ("value", "grad", "op", "parents", "rule", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = as_matrix(value)
        self.grad = np.zeros_like(self.value) if requires_grad else None
        self.op = "leaf"
        self.parents: tuple[Node, ...] = ()
        self.rule: Callable | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def is_leaf(self) -> bool:
        return self.op == "leaf"

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 node, got {self.value.shape}")
        return float(self.value[0, 0])

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.value)

    def __repr__(self) -> str:
        label = self.name or self.op
        return f"Node({label}, shape={self.value.shape})"

    # Operator sugar; every method maps onto a primitive below.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def constant(value, name: str | None = None) -> Node:
    return Node(value, requires_grad=False, name=name)


def parameter(value, name: str | None = None) -> Node:
    return Node(np.array(as_matrix(value), copy=True), requires_grad=True, name=name)


def _wrap(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


def _make(op: str, value: np.ndarray, parents: Sequence[Node], rule: Callable) -> Node:
    out = Node.__new__(Node)
    out.value = value
    out.op = op
    out.name = None
    out.grad = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.parents = tuple(parents)
        out.rule = rule
        out.requires_grad = True
    else:
        out.parents = ()
        out.rule = None
        out.requires_grad = False
    return out


def _broadcast_shape(op: str, a: tuple, b: tuple) -> tuple[int, int]:
    if a == b:
        return a
    rows = _merge_dim(a[0], b[0])
    cols = _merge_dim(a[1], b[1])
    if rows is None or cols is None:
        raise ShapeError(f"{op}: cannot combine shapes {a} and {b}")
    return rows, cols


def _merge_dim(x: int, y: int) -> int | None:
    if x == y:
        return x
    if x == 1:
        return y
    if y == 1:
        return x
    return None


# ---------------------------------------------------------------------------
# Array namespaces used by the vector-Jacobian rules.


class _ArrayOps:
    """Rules evaluated on raw arrays."""

    matmul = staticmethod(np.matmul)
    mul = staticmethod(np.multiply)
    add = staticmethod(np.add)

    @staticmethod
    def T(x):
        return x.T

    @staticmethod
    def scale(x, c):
        return x * c

    @staticmethod
    def neg(x):
        return -x

    @staticmethod
    def const(x):
        return x

    @staticmethod
    def row_sum(x):
        return x.sum(axis=1, keepdims=True)

    @staticmethod
    def col_sum(x):
        return x.sum(axis=0, keepdims=True)

    @staticmethod
    def expand(x, shape):
        return np.broadcast_to(x, shape).copy()

    @staticmethod
    def reciprocal(x):
        return 1.0 / x

    sin = staticmethod(np.sin)
    cos = staticmethod(np.cos)

    @staticmethod
    def sigmoid(x):
        return _sigmoid(x)


class _GraphOps:
    """Rules evaluated on nodes, so the gradient itself is differentiable."""

    @staticmethod
    def matmul(a, b):
        return matmul(a, b)

    @staticmethod
    def mul(a, b):
        return mul(a, b)

    @staticmethod
    def add(a, b):
        return add(a, b)

    @staticmethod
    def T(x):
        return transpose(x)

    @staticmethod
    def scale(x, c):
        return scale(x, c)

    @staticmethod
    def neg(x):
        return neg(x)

    @staticmethod
    def const(x):
        return constant(x)

    @staticmethod
    def row_sum(x):
        return row_sum(x)

    @staticmethod
    def col_sum(x):
        return col_sum(x)

    @staticmethod
    def expand(x, shape):
        if x.shape == shape:
            return x
        return add(x, constant(np.zeros(shape)))

    @staticmethod
    def reciprocal(x):
        return reciprocal(x)

    @staticmethod
    def sin(x):
        return sin(x)

    @staticmethod
    def cos(x):
        return cos(x)

    @staticmethod
    def sigmoid(x):
        return sigmoid(x)


def _unbroadcast(xp, g, shape):
    gshape = g.shape
    if gshape == shape:
        return g
    if shape[0] == 1 and gshape[0] != 1:
        g = xp.col_sum(g)
    if shape[1] == 1 and gshape[1] != 1:
        g = xp.row_sum(g)
    return g


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# Primitive operators.


def matmul(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ for shapes {a.shape} and {b.shape}")

    def rule(xp, g, out, x, y):
        return xp.matmul(g, xp.T(y)), xp.matmul(xp.T(x), g)

    return _make("matmul", a.value @ b.value, (a, b), rule)


def transpose(a) -> Node:
    a = _wrap(a)

    def rule(xp, g, out, x):
        return (xp.T(g),)

    return _make("transpose", a.value.T.copy(), (a,), rule)


def add(a, b) -> Node:
    a, b = _wrap(a), _wrap(b)
    _broadcast_shape("add", a.shape, b.shape)
    sa, sb = a.shape, b.shape

    def rule(xp, g, out, x, y):
        return _unbroadcast(xp, g, sa), _unbroadcast(xp, g, sb)

    return _make("add", a.value + b.value, (a, b), rule)


def mul(a, b) -> Node:
    """Elementwise product with row/column/scalar broadcasting."""
    a, b = _wrap(a), _wrap(b)
    _broadcast_shape("mul", a.shape, b.shape)
    sa, sb = a.shape, b.shape

    def rule(xp, g, out, x, y):
        return _unbroadcast(xp, xp.mul(g, y), sa), _unbroadcast(xp, xp.mul(g, x), sb)

    return _make("mul", a.value * b.value, (a, b), rule)


def scale(a, c: float) -> Node:
    a = _wrap(a)
    c = float(c)

    def rule(xp, g, out, x):
        return (xp.scale(g, c),)

    return _make("scale", a.value * c, (a,), rule)


def neg(a) -> Node:
    a = _wrap(a)

    def rule(xp, g, out, x):
        return (xp.neg(g),)

    return _make("neg", -a.value, (a,), rule)


def tanh(a) -> Node:
    a = _wrap(a)

    def rule(xp, g, out, x):
        return (xp.mul(g, xp.add(xp.neg(xp.mul(out, out)), xp.const(np.ones((1, 1))))),)

    return _make("tanh", np.tanh(a.value), (a,), rule)


def relu(a) -> Node:
    a = _wrap(a)
    mask = (a.value > 0).astype(np.float64)

    def rule(xp, g, out, x):
        return (xp.mul(g, xp.const(mask)),)

    return _make("relu", a.value * mask, (a,), rule)


def leaky_relu(a, slope: float = 0.2) -> Node:
    a = _wrap(a)
    factor = np.where(a.value > 0, 1.0, slope)

    def rule(xp, g, out, x):
        return (xp.mul(g, xp.const(factor)),)

    return _make("leaky_relu", a.value * factor, (a,), rule)


def sigmoid(a) -> Node:
    a = _wrap(a)

    def rule(xp, g, out, x):
        one_minus = xp.add(xp.neg(out), xp.const(np.ones((1, 1))))
        return (xp.mul(g, xp.mul(out, one_minus)),)

    return _make("sigmoid", _sigmoid(a.value), (a,), rule)


def softplus(a) -> Node:
    """log(1 + exp(a)), evaluated without overflow."""
    a = _wrap(a)

    def rule(xp, g, out, x):
        return (xp.mul(g, xp.sigmoid(x)),)

    return _make("softplus", np.logaddexp(0.0, a.value), (a,), rule)


def exp(a) -> Node:
    a = _wrap(a)

    def rule(xp, g, out, x):
        return (xp.mul(g, out),)

    return _make("exp", np.exp(a.value), (a,), rule)


def log(a) -> Node:
    a = _wrap(a)
    if np.any(a.value <= 0):
        raise FloatingPointError("log: non-positive argument")

    def rule(xp, g, out, x):
        return (xp.mul(g, xp.reciprocal(x)),)

    return _make("log", np.log(a.value), (a,), rule)


def reciprocal(a) -> Node:
    a = _wrap(a)

    def rule(xp, g, out, x):
        return (xp.neg(xp.mul(g, xp.mul(out, out))),)

    return _make("reciprocal", 1.0 / a.value, (a,), rule)


def sqrt(a) -> Node:
    a = _wrap(a)

    def rule(xp, g, out, x):
        return (xp.scale(xp.mul(g, xp.reciprocal(out)), 0.5),)

    return _make("sqrt", np.sqrt(a.value), (a,), rule)


def sin(a) -> Node:
    a = _wrap(a)

    def rule(xp, g, out, x):
        return (xp.mul(g, xp.cos(x)),)

    return _make("sin", np.sin(a.value), (a,), rule)


def cos(a) -> Node:
    a = _wrap(a)

    def rule(xp, g, out, x):
        return (xp.neg(xp.mul(g, xp.sin(x))),)

    return _make("cos", np.cos(a.value), (a,), rule)


def clamp_min(a, floor: float) -> Node:
    """max(a, floor) elementwise; the gradient is zero where the floor is active."""
    a = _wrap(a)
    mask = (a.value > floor).astype(np.float64)

    def rule(xp, g, out, x):
        return (xp.mul(g, xp.const(mask)),)

    return _make("clamp_min", np.maximum(a.value, floor), (a,), rule)


def row_sum(a) -> Node:
    a = _wrap(a)
    shape = a.shape

    def rule(xp, g, out, x):
        return (xp.expand(g, shape),)

    return _make("row_sum", a.value.sum(axis=1, keepdims=True), (a,), rule)


def col_sum(a) -> Node:
    a = _wrap(a)
    shape = a.shape

    def rule(xp, g, out, x):
        return (xp.expand(g, shape),)

    return _make("col_sum", a.value.sum(axis=0, keepdims=True), (a,), rule)


def row_mean(a) -> Node:
    a = _wrap(a)
    return scale(row_sum(a), 1.0 / a.shape[1])


def row_var(a) -> Node:
    """Population variance of each row (divides by the row length)."""
    a = _wrap(a)
    n = a.shape[1]
    centered_value = a.value - a.value.mean(axis=1, keepdims=True)

    def rule(xp, g, out, x):
        centered = xp.add(x, xp.neg(xp.scale(xp.row_sum(x), 1.0 / n)))
        return (xp.mul(xp.scale(g, 2.0 / n), centered),)

    return _make("row_var", (centered_value**2).mean(axis=1, keepdims=True), (a,), rule)


def sqdist(a) -> Node:
    """Matrix of squared Euclidean distances between the rows of ``a`` (M x M)."""
    a = _wrap(a)
    v = a.value
    diff = v[:, None, :] - v[None, :, :]
    value = np.einsum("ijk,ijk->ij", diff, diff)

    def rule(xp, g, out, x):
        sym = xp.add(g, xp.T(g))
        return (xp.scale(xp.add(xp.mul(xp.row_sum(sym), x), xp.neg(xp.matmul(sym, x))), 2.0),)

    return _make("sqdist", value, (a,), rule)


def total(a) -> Node:
    """Sum of all entries as a 1 x 1 node."""
    a = _wrap(a)
    shape = a.shape

    def rule(xp, g, out, x):
        return (xp.expand(g, shape),)

    return _make("sum", np.array([[a.value.sum()]]), (a,), rule)


def mean(a) -> Node:
    a = _wrap(a)
    return scale(total(a), 1.0 / a.value.size)


# ---------------------------------------------------------------------------
# Expression trees.

OPERATORS: dict[str, Callable] = {
    "matmul": matmul,
    "transpose": transpose,
    "add": add,
    "mul": mul,
    "scale": scale,
    "neg": neg,
    "tanh": tanh,
    "relu": relu,
    "leaky_relu": leaky_relu,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "exp": exp,
    "log": log,
    "reciprocal": reciprocal,
    "sqrt": sqrt,
    "sin": sin,
    "cos": cos,
    "clamp_min": clamp_min,
    "row_sum": row_sum,
    "col_sum": col_sum,
    "row_mean": row_mean,
    "row_var": row_var,
    "sqdist": sqdist,
    "sum": total,
    "mean": mean,
}


def graph_eval(expr, inputs: dict[str, Node | np.ndarray | float]) -> Node:
    """Evaluate a nested-tuple expression such as ``("mul", "x", "y")``.

    Strings name entries of ``inputs``; numbers inside an operator tuple are
    passed through as plain arguments (e.g. the factor of ``scale``).
    """
    cache: dict[str, Node] = {}

    def visit(e):
        if isinstance(e, str):
            if e not in inputs:
                raise KeyError(f"unknown input {e!r}")
            if e not in cache:
                cache[e] = _wrap(inputs[e])
            return cache[e]
        if isinstance(e, Node):
            return e
        if isinstance(e, tuple) and e and isinstance(e[0], str):
            op = e[0]
            if op not in OPERATORS:
                raise KeyError(f"unknown operator {op!r}")
            args = [a if isinstance(a, (int, float)) else visit(a) for a in e[1:]]
            return OPERATORS[op](*args)
        raise TypeError(f"cannot evaluate expression element {e!r}")

    return visit(expr)


# ---------------------------------------------------------------------------
# Backward passes.


def _topo_order(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _propagate(root: Node, seed, xp) -> dict[int, object]:
    grads: dict[int, object] = {id(root): seed}
    for node in reversed(_topo_order(root)):
        g = grads.get(id(node))
        if g is None or node.rule is None:
            continue
        if xp is _ArrayOps:
            parent_grads = node.rule(xp, g, node.value, *(p.value for p in node.parents))
        else:
            parent_grads = node.rule(xp, g, node, *node.parents)
        for p, pg in zip(node.parents, parent_grads):
            if not p.requires_grad:
                continue
            key = id(p)
            prev = grads.get(key)
            grads[key] = pg if prev is None else xp.add(prev, pg)
    return grads


def backward(root: Node) -> dict[Node, np.ndarray]:
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every trainable leaf.

    Calling it again without zeroing accumulates, as with any tape.
    Returns a map from each reached leaf to its accumulated gradient.
    """
    if root.shape != (1, 1):
        raise ShapeError(f"backward: root must be 1x1, got {root.shape}")
    if not root.requires_grad:
        return {}
    grads = _propagate(root, np.ones((1, 1)), _ArrayOps)
    result: dict[Node, np.ndarray] = {}
    for node in _topo_order(root):
        g = grads.get(id(node))
        if g is None:
            continue
        if node.is_leaf:
            node.grad = node.grad + g if node.grad is not None else np.array(g)
            result[node] = node.grad
        else:
            node.grad = g
    return result


def grad(root: Node, wrt: Iterable[Node], create_graph: bool = False) -> list:
    """Gradients of a 1x1 ``root`` with respect to ``wrt`` without touching ``.grad``.

    With ``create_graph`` the results are nodes that can be differentiated again.
    """
    wrt = list(wrt)
    if root.shape != (1, 1):
        raise ShapeError(f"grad: root must be 1x1, got {root.shape}")
    if create_graph:
        grads = _propagate(root, constant(np.ones((1, 1))), _GraphOps)
        return [grads.get(id(w), constant(np.zeros(w.shape))) for w in wrt]
    grads = _propagate(root, np.ones((1, 1)), _ArrayOps)
    return [np.array(grads[id(w)]) if id(w) in grads else np.zeros(w.shape) for w in wrt]
