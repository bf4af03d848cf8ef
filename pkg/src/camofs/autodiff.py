"""Tape-based reverse-mode differentiation over scalars, vectors and matrices.

Every loss in the package is built from the handful of primitives defined here,
so gradients can be checked against finite differences without a deep-learning
framework. A :class:`Tape` records each primitive as it is evaluated; calling
:meth:`Tape.backward` replays the record in reverse.

Plain numbers, lists and numpy arrays are accepted wherever a node is expected
and are lifted onto the active tape as constants (they receive no gradient).
When none of the inputs of an op lives on a tape, a fresh tape is created.

    >>> tape = Tape()
    >>> x = tape.vector([1.0, 2.0])
    >>> grads = tape.backward(dot(x, x))
    >>> grads[x].tolist()
    [2.0, 4.0]
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tape",
    "common_tape",
    "Node",
    "Scalar",
    "Vector",
    "Matrix",
    "GraphError",
    "dot",
    "cosine_distance",
    "log_sum_exp",
    "backward",
    "mean",
    "relu",
    "exp",
    "log",
    "normalize",
    "norm",
    "matvec",
    "stack",
    "sum_scalars",
    "GradCheckResult",
    "check_gradients",
]


class GraphError(ValueError):
    """Raised for ill-formed graphs: mixed tapes, foreign roots, bad shapes."""


_BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tape:
    """Append-only record of evaluated primitives.

    Nodes may only reference nodes created earlier on the same tape, so the
    recorded graph is acyclic by construction. A tape is meant to be written by
    one thread; distinct tapes share no state.
    """

    def __init__(self) -> None:
        self._nodes: list[Node] = []
        # entries[k] is (output, inputs, backward_fn)
        self._entries: list[tuple[Node, tuple[Node, ...], _BackwardFn]] = []

    def __len__(self) -> int:
        return len(self._nodes)

    # leaf constructors
    def scalar(self, value: float, requires_grad: bool = True) -> "Scalar":
        return Scalar(self, _finite(np.asarray(value, dtype=float).reshape(())), requires_grad)

    def vector(self, values, requires_grad: bool = True) -> "Vector":
        arr = np.array(values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise GraphError(f"vector needs a non-empty 1-D input, got shape {arr.shape}")
        return Vector(self, _finite(arr), requires_grad)

    def matrix(self, values, requires_grad: bool = True) -> "Matrix":
        arr = np.array(values, dtype=float)
        if arr.ndim != 2 or arr.size == 0:
            raise GraphError(f"matrix needs a non-empty 2-D input, got shape {arr.shape}")
        return Matrix(self, _finite(arr), requires_grad)

    def constant(self, value) -> "Node":
        arr = np.array(value, dtype=float)
        cls = {0: Scalar, 1: Vector, 2: Matrix}.get(arr.ndim)
        if cls is None:
            raise GraphError(f"unsupported rank {arr.ndim}")
        return cls(self, arr, False)

    def lift(self, value) -> "Node":
        """Return ``value`` itself if it is a node of this tape, else a constant.

        Nodes of another tape are copied in by value when they carry no
        gradient; a gradient-carrying foreign node is an error.
        """
        if isinstance(value, Node):
            if value.tape is self:
                return value
            if value.requires_grad:
                raise GraphError("node belongs to a different tape")
            return self.constant(value.value)
        return self.constant(value)

    def _register(self, node: "Node") -> None:
        node._index = len(self._nodes)
        self._nodes.append(node)

    def _record(self, out: "Node", inputs: tuple["Node", ...], fn: _BackwardFn) -> "Node":
        if any(i.requires_grad for i in inputs):
            out.requires_grad = True
            self._entries.append((out, inputs, fn))
        return out

    def backward(self, root: "Scalar") -> dict["Node", np.ndarray]:
        """Propagate d(root)/d(node) to every node on the tape.

        Returns a mapping from each gradient-carrying leaf to its gradient.
        The ``grad`` attribute of every node is overwritten (None for constants).
        """
        if not isinstance(root, Scalar):
            raise GraphError("backward needs a Scalar root")
        if root.tape is not self:
            raise GraphError("root does not belong to this tape")
        for node in self._nodes:
            node.grad = np.zeros_like(node.value) if node.requires_grad else None
        root.grad = np.ones_like(root.value)
        for out, inputs, fn in reversed(self._entries):
            if out._index > root._index or not out.grad.any():
                continue
            for inp, g in zip(inputs, fn(out.grad)):
                if g is not None and inp.requires_grad:
                    inp.grad = inp.grad + g
        return {n: n.grad for n in self._nodes if n.is_leaf and n.requires_grad}


def _norm(v: np.ndarray) -> float:
    return math.sqrt(float(np.dot(v, v)))


def _finite(arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise GraphError("non-finite value")
    return arr


class Node:
    """A value on a tape. Leaves are created through the tape's constructors."""

    __slots__ = ("tape", "value", "grad", "requires_grad", "is_leaf", "_index")
    __hash__ = object.__hash__

    def __init__(self, tape: Tape, value: np.ndarray, requires_grad: bool, is_leaf: bool = True):
        self.tape = tape
        self.value = value
        self.grad = None  # filled by Tape.backward
        self.requires_grad = requires_grad
        self.is_leaf = is_leaf
        tape._register(self)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def numpy(self) -> np.ndarray:
        """Detached copy of the value."""
        return np.array(self.value, copy=True)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.value!r})"

    # arithmetic shared by all ranks; elementwise with broadcasting of scalars
    def __add__(self, other):
        return _add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _add(self, _neg(_lift_like(self, other)))

    def __rsub__(self, other):
        return _add(_lift_like(self, other), _neg(self))

    def __neg__(self):
        return _neg(self)

    def __mul__(self, other):
        return _mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Node):
            raise GraphError("division by a node is not supported")
        return _mul(self, 1.0 / float(other))


class Scalar(Node):
    __slots__ = ()

    def __float__(self) -> float:
        return float(self.value)

    @property
    def item(self) -> float:
        return float(self.value)


class Vector(Node):
    __slots__ = ()

    def __len__(self) -> int:
        return int(self.value.shape[0])


class Matrix(Node):
    __slots__ = ()


def _wrap(tape: Tape, value: np.ndarray) -> Node:
    cls = {0: Scalar, 1: Vector, 2: Matrix}[np.ndim(value)]
    return cls(tape, np.asarray(value, dtype=float), False, is_leaf=False)


def common_tape(*items) -> Tape:
    """The tape shared by every node among ``items``; a new tape if there are none."""
    return _tape_of(*items)


def _tape_of(*items) -> Tape:
    # only gradient-carrying nodes pin the tape; constant nodes are copied by value
    tape = None
    for item in items:
        if isinstance(item, Node) and item.requires_grad:
            if tape is None:
                tape = item.tape
            elif item.tape is not tape:
                raise GraphError("operands live on different tapes")
    if tape is None:
        tape = next((i.tape for i in items if isinstance(i, Node)), None)
    return tape if tape is not None else Tape()


def _lift(tape: Tape, item) -> Node:
    return tape.lift(item)


def _lift_like(node: Node, item) -> Node:
    return _lift(_tape_of(node, item), item)


def _lift_all(*items) -> tuple[Tape, list[Node]]:
    tape = _tape_of(*items)
    return tape, [_lift(tape, i) for i in items]


# primitive ops -----------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(g.sum()) if shape == () else g


def _add(a, b) -> Node:
    tape, (a, b) = _lift_all(a, b)
    if a.shape != b.shape and () not in (a.shape, b.shape):
        raise GraphError(f"shape mismatch {a.shape} vs {b.shape}")
    out = _wrap(tape, a.value + b.value)
    return tape._record(
        out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    )


def _neg(a: Node) -> Node:
    out = _wrap(a.tape, -a.value)
    return a.tape._record(out, (a,), lambda g: (-g,))


def _mul(a, b) -> Node:
    tape, (a, b) = _lift_all(a, b)
    if a.shape != b.shape and () not in (a.shape, b.shape):
        raise GraphError(f"shape mismatch {a.shape} vs {b.shape}")
    out = _wrap(tape, a.value * b.value)
    return tape._record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def _as_vector(tape: Tape, x) -> Vector:
    node = _lift(tape, x)
    if not isinstance(node, Vector):
        raise GraphError(f"expected a vector, got shape {node.shape}")
    return node


def dot(a, b) -> Scalar:
    """Inner product of two equal-length vectors."""
    tape = _tape_of(a, b)
    a, b = _as_vector(tape, a), _as_vector(tape, b)
    if a.shape != b.shape:
        raise GraphError(f"dimension mismatch {len(a)} vs {len(b)}")
    out = _wrap(tape, np.dot(a.value, b.value))
    return tape._record(out, (a, b), lambda g: (g * b.value, g * a.value))


def norm(x) -> Scalar:
    tape = _tape_of(x)
    x = _as_vector(tape, x)
    n = _norm(x.value)
    if n == 0.0:
        raise GraphError("norm of a zero vector has no gradient")
    out = _wrap(tape, np.asarray(n))
    return tape._record(out, (x,), lambda g: (g * x.value / n,))


def normalize(x) -> Vector:
    """x / ||x||. Zero vectors are rejected."""
    tape = _tape_of(x)
    x = _as_vector(tape, x)
    n = _norm(x.value)
    if n == 0.0:
        raise GraphError("cannot normalize a zero vector")
    u = x.value / n
    out = _wrap(tape, u)
    return tape._record(out, (x,), lambda g: ((g - u * np.dot(u, g)) / n,))


def cosine_distance(x, y) -> Scalar:
    """1 - x.y / (|x| |y|), in [0, 2]."""
    tape = _tape_of(x, y)
    x, y = _as_vector(tape, x), _as_vector(tape, y)
    if x.shape != y.shape:
        raise GraphError(f"dimension mismatch {len(x)} vs {len(y)}")
    nx, ny = _norm(x.value), _norm(y.value)
    if nx == 0.0 or ny == 0.0:
        raise GraphError("cosine distance is undefined for a zero-norm input")
    ux, uy = x.value / nx, y.value / ny
    c = float(np.dot(ux, uy))
    out = _wrap(tape, np.asarray(min(max(1.0 - c, 0.0), 2.0)))

    def grad(g):
        return (-g * (uy - c * ux) / nx, -g * (ux - c * uy) / ny)

    return tape._record(out, (x, y), grad)


def log_sum_exp(xs) -> Scalar:
    """Stable log(sum(exp(x))) over a list of scalars or a vector."""
    if isinstance(xs, Vector):
        v = xs
        tape = v.tape
    else:
        items = list(xs)
        if not items:
            raise GraphError("log_sum_exp of an empty sequence")
        v = stack_scalars(items)
        tape = v.tape
    vals = v.value
    m = float(vals.max())
    w = np.exp(vals - m)
    s = float(w.sum())
    out = _wrap(tape, np.asarray(m + math.log(s)))
    p = w / s
    return tape._record(out, (v,), lambda g: (g * p,))


def stack_scalars(items: Sequence) -> Vector:
    tape, nodes = _lift_all(*items)
    for n in nodes:
        if not isinstance(n, Scalar):
            raise GraphError("stack_scalars expects scalars")
    out = _wrap(tape, np.array([n.value for n in nodes], dtype=float))
    return tape._record(out, tuple(nodes), lambda g: tuple(np.asarray(gi) for gi in g))


def stack(vectors: Sequence) -> Matrix:
    """Stack equal-length vectors as rows of a matrix."""
    if not vectors:
        raise GraphError("stack of an empty sequence")
    tape, nodes = _lift_all(*vectors)
    rows = [_as_vector(tape, n) for n in nodes]
    if len({r.shape for r in rows}) != 1:
        raise GraphError("stack needs vectors of one length")
    out = _wrap(tape, np.stack([r.value for r in rows]))
    return tape._record(out, tuple(rows), lambda g: tuple(g))


def matvec(m, v) -> Vector:
    """Matrix-vector product m @ v."""
    tape = _tape_of(m, v)
    m, v = _lift(tape, m), _as_vector(tape, v)
    if not isinstance(m, Matrix) or m.shape[1] != v.shape[0]:
        raise GraphError(f"cannot multiply {m.shape} by {v.shape}")
    out = _wrap(tape, m.value @ v.value)
    return tape._record(out, (m, v), lambda g: (np.outer(g, v.value), m.value.T @ g))


def mean(items: Sequence) -> Node:
    """Elementwise mean of equal-shape scalars or vectors."""
    if not items:
        raise GraphError("mean of an empty sequence")
    tape, nodes = _lift_all(*items)
    if len({n.shape for n in nodes}) != 1:
        raise GraphError("mean needs operands of one shape")
    k = len(nodes)
    out = _wrap(tape, sum(n.value for n in nodes) / k)
    return tape._record(out, tuple(nodes), lambda g: (g / k,) * k)


def sum_scalars(items: Sequence) -> Scalar:
    if not items:
        raise GraphError("sum of an empty sequence")
    tape, nodes = _lift_all(*items)
    out = _wrap(tape, np.asarray(sum(float(n.value) for n in nodes)))
    return tape._record(out, tuple(nodes), lambda g: (g,) * len(nodes))


def relu(x) -> Scalar:
    """max(x, 0); the subgradient at exactly 0 is 0."""
    tape = _tape_of(x)
    x = _lift(tape, x)
    on = x.value > 0
    out = _wrap(tape, np.where(on, x.value, 0.0))
    return tape._record(out, (x,), lambda g: (g * on,))


def exp(x) -> Node:
    tape = _tape_of(x)
    x = _lift(tape, x)
    e = np.exp(x.value)
    return tape._record(_wrap(tape, e), (x,), lambda g: (g * e,))


def log(x) -> Node:
    tape = _tape_of(x)
    x = _lift(tape, x)
    if np.any(x.value <= 0):
        raise GraphError("log of a non-positive value")
    return tape._record(_wrap(tape, np.log(x.value)), (x,), lambda g: (g / x.value,))


def backward(root: Scalar) -> dict[Node, np.ndarray]:
    """Run reverse accumulation from ``root`` on its own tape."""
    if not isinstance(root, Scalar):
        raise GraphError("backward needs a Scalar root")
    return root.tape.backward(root)


# gradient checking -------------------------------------------------------


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    failures: int
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.failures == 0


def check_gradients(
    build: Callable[[Tape, list[Node]], Scalar],
    inputs: Iterable,
    h: float = 1e-4,
    tolerance: float = 1e-4,
    fd_floor: float = 1e-6,
) -> GradCheckResult:
    """Compare reverse-mode gradients of ``build`` against central differences.

    ``build(tape, leaves)`` must construct the scalar from the given leaves.
    Coordinates whose finite difference is at most ``fd_floor`` in magnitude
    are skipped for the relative test. A coordinate passes when its relative
    error is strictly below ``tolerance``.
    """
    arrays = [np.array(a, dtype=float) for a in inputs]

    def make(tape: Tape, arr: np.ndarray, requires_grad: bool = True) -> Node:
        return {0: tape.scalar, 1: tape.vector, 2: tape.matrix}[arr.ndim](arr, requires_grad)

    tape = Tape()
    leaves = [make(tape, a) for a in arrays]
    root = build(tape, leaves)
    tape.backward(root)
    analytic = [leaf.grad.copy() for leaf in leaves]

    def f(k: int, idx: tuple, delta: float) -> float:
        arrs = [a.copy() for a in arrays]
        arrs[k][idx] += delta
        t = Tape()
        return float(build(t, [make(t, a, False) for a in arrs]).value)

    max_err, checked, failures = 0.0, 0, 0
    for k, arr in enumerate(arrays):
        for idx in itertools.product(*(range(s) for s in arr.shape)):
            fd = (f(k, idx, h) - f(k, idx, -h)) / (2.0 * h)
            if abs(fd) <= fd_floor:
                continue
            err = abs(float(analytic[k][idx]) - fd) / abs(fd)
            checked += 1
            max_err = max(max_err, err)
            if not err < tolerance:
                failures += 1
    return GradCheckResult(max_err, checked, failures, tolerance)
