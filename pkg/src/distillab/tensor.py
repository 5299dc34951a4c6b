"""Dense float64 arrays with a define-by-run reverse-mode gradient tape.

Forward code runs eagerly on numpy arrays. While a :class:`GradientTape` is
active, every operation whose inputs are tracked appends a node holding the
pullback closures for the reverse pass. Because nodes are appended in
execution order, the tape list is already topologically sorted and
:func:`backward` is a single reverse sweep. The tape is rebuilt on every
forward pass and cleared by ``backward``.

Everything is float64: the test suite leans on tight finite-difference
tolerances, and the models here are small enough that 32-bit speed is
irrelevant.
"""

from __future__ import annotations

from typing import Optional

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(ValueError):
    """A scalar argument lies outside the operation's domain."""


class TapeError(RuntimeError):
    """Gradient-tape contract violation (non-scalar loss, dead tape, ...)."""


_ACTIVE_TAPE: Optional["GradientTape"] = None


class _Node:
    __slots__ = ("tape", "parents", "pullbacks", "grad")

    def __init__(self, tape, parents, pullbacks):
        self.tape = tape
        self.parents = parents
        self.pullbacks = pullbacks
        self.grad = None


class Tensor:
    """A C-ordered float64 array, optionally attached to a gradient tape."""

    __slots__ = ("values", "node")

    def __init__(self, values, node: Optional[_Node] = None):
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.node = node

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.values.shape}")
        return float(self.values.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, tracked={self.node is not None})"

    # Operator sugar; all routed through the module-level ops below.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return tensor_sum(self)

    def mean(self):
        return tensor_mean(self)


class GradientTape:
    """Records one forward pass. Enter, watch parameters, build the loss."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._watched: list[Tensor] = []
        self._cleared = False

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise TapeError("a gradient tape is already active")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def watch(self, t: Tensor) -> Tensor:
        """Register ``t`` as a leaf whose gradient backward() will report."""
        if self._cleared:
            raise TapeError("tape has already been consumed by backward()")
        t.node = _Node(self, (), ())
        self._watched.append(t)
        return t

    def _clear(self):
        for t in self._watched:
            t.node = None
        self._nodes = []
        self._watched = []
        self._cleared = True


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _record(out_values, inputs_pullbacks) -> Tensor:
    """Wrap ``out_values``; record a node if any input is live on the tape."""
    tape = _ACTIVE_TAPE
    if tape is not None:
        live = [
            (t.node, pull)
            for t, pull in inputs_pullbacks
            if t.node is not None and t.node.tape is tape
        ]
        if live:
            node = _Node(tape, tuple(n for n, _ in live), tuple(p for _, p in live))
            tape._nodes.append(node)
            return Tensor(out_values, node)
    return Tensor(out_values)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def backward(loss: Tensor) -> dict[Tensor, Tensor]:
    """Reverse sweep from a scalar loss.

    Returns the gradient for every parameter watched on the loss's tape
    (zeros for parameters the loss does not depend on) and clears the tape.
    """
    if loss.node is None:
        raise TapeError("loss was not produced under an active gradient tape")
    if loss.values.size != 1:
        raise TapeError(f"backward expects a scalar loss, got shape {loss.values.shape}")
    tape = loss.node.tape
    if tape._cleared:
        raise TapeError("tape has already been consumed by backward()")

    loss.node.grad = np.ones_like(loss.values)
    for node in reversed(tape._nodes):
        if node.grad is None:
            continue
        for parent, pull in zip(node.parents, node.pullbacks):
            g = pull(node.grad)
            parent.grad = g if parent.grad is None else parent.grad + g

    grads = {}
    for p in tape._watched:
        g = p.node.grad
        grads[p] = Tensor(np.zeros_like(p.values) if g is None else g)
    tape._clear()
    return grads


# ---------------------------------------------------------------------------
# numpy helpers shared by tracked ops and detached (oracle/teacher) paths
# ---------------------------------------------------------------------------


def softmax_rows(values: np.ndarray, tau: float) -> np.ndarray:
    """Temperature softmax along the last axis, log-sum-exp stabilized."""
    u = np.asarray(values, dtype=np.float64) / tau
    u = u - u.max(axis=-1, keepdims=True)
    e = np.exp(u)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_rows(values: np.ndarray, tau: float) -> np.ndarray:
    u = np.asarray(values, dtype=np.float64) / tau
    u = u - u.max(axis=-1, keepdims=True)
    return u - np.log(np.exp(u).sum(axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.values.shape[1] != b.values.shape[0]:
        raise ShapeError(
            f"matmul expects [m x k] @ [k x p], got {a.values.shape} @ {b.values.shape}"
        )
    out = a.values @ b.values
    av, bv = a.values, b.values
    return _record(
        out,
        [
            (a, lambda g: g @ bv.T),
            (b, lambda g: av.T @ g),
        ],
    )


def _binary_shapes_ok(a: np.ndarray, b: np.ndarray) -> bool:
    if a.shape == b.shape:
        return True
    if b.size == 1 or a.size == 1:
        return True
    # row-broadcast bias: [B x K] (+|-|*) [K]
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return True
    if b.ndim == 2 and a.ndim == 1 and b.shape[1] == a.shape[0]:
        return True
    return False


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if not _binary_shapes_ok(a.values, b.values):
        raise ShapeError(f"add shapes incompatible: {a.values.shape} + {b.values.shape}")
    out = a.values + b.values
    return _record(
        out,
        [
            (a, lambda g: _unbroadcast(g, a.values.shape)),
            (b, lambda g: _unbroadcast(g, b.values.shape)),
        ],
    )


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if not _binary_shapes_ok(a.values, b.values):
        raise ShapeError(f"sub shapes incompatible: {a.values.shape} - {b.values.shape}")
    out = a.values - b.values
    return _record(
        out,
        [
            (a, lambda g: _unbroadcast(g, a.values.shape)),
            (b, lambda g: _unbroadcast(-g, b.values.shape)),
        ],
    )


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if not _binary_shapes_ok(a.values, b.values):
        raise ShapeError(f"mul shapes incompatible: {a.values.shape} * {b.values.shape}")
    out = a.values * b.values
    av, bv = a.values, b.values
    return _record(
        out,
        [
            (a, lambda g: _unbroadcast(g * bv, av.shape)),
            (b, lambda g: _unbroadcast(g * av, bv.shape)),
        ],
    )


def neg(a) -> Tensor:
    a = _coerce(a)
    return _record(-a.values, [(a, lambda g: -g)])


def relu(a) -> Tensor:
    a = _coerce(a)
    out = np.maximum(a.values, 0.0)
    mask = a.values > 0.0  # derivative taken as 0 at the kink
    return _record(out, [(a, lambda g: g * mask)])


def softmax_t(logits, tau: float) -> Tensor:
    """Temperature-softened softmax over the last axis; rows sum to one."""
    if tau <= 0:
        raise DomainError(f"softmax temperature must be positive, got {tau}")
    a = _coerce(logits)
    p = softmax_rows(a.values, tau)

    def pull(g):
        inner = (g * p).sum(axis=-1, keepdims=True)
        return (g * p - p * inner) / tau

    return _record(p, [(a, pull)])


def log_softmax_t(logits, tau: float) -> Tensor:
    if tau <= 0:
        raise DomainError(f"softmax temperature must be positive, got {tau}")
    a = _coerce(logits)
    out = log_softmax_rows(a.values, tau)
    p = np.exp(out)

    def pull(g):
        return (g - p * g.sum(axis=-1, keepdims=True)) / tau

    return _record(out, [(a, pull)])


def tensor_sum(a) -> Tensor:
    a = _coerce(a)
    shape = a.values.shape
    return _record(np.asarray(a.values.sum()), [(a, lambda g: np.broadcast_to(g, shape).copy())])


def tensor_mean(a) -> Tensor:
    a = _coerce(a)
    shape = a.values.shape
    n = a.values.size
    return _record(
        np.asarray(a.values.mean()),
        [(a, lambda g: np.broadcast_to(g / n, shape).copy())],
    )


def take_per_row(a, indices) -> Tensor:
    """Pick one entry per row: out[i] = a[i, indices[i]]."""
    a = _coerce(a)
    if a.values.ndim != 2:
        raise ShapeError(f"take_per_row expects a 2-d tensor, got shape {a.values.shape}")
    idx = np.asarray(indices, dtype=np.int64)
    n_rows, n_cols = a.values.shape
    if idx.shape != (n_rows,):
        raise ShapeError(f"expected {n_rows} indices, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= n_cols):
        bad = idx[(idx < 0) | (idx >= n_cols)][0]
        raise IndexError(f"row index {bad} outside [0, {n_cols})")
    rows = np.arange(n_rows)
    out = a.values[rows, idx]

    def pull(g):
        full = np.zeros_like(a.values)
        full[rows, idx] = g
        return full

    return _record(out, [(a, pull)])
