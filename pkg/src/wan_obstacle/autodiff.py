"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tape` records primitive operations eagerly, in topological order.
Node values are 2D arrays laid out as ``(features, points)``; scalars are
stored as ``(1, 1)`` arrays.  Calling :meth:`Tape.backward` on a scalar root
sweeps the tape once in reverse and returns the gradient with respect to every
leaf registered through :meth:`Tape.param`, flattened and concatenated in
registration order.

Spatial derivatives of the networks are not taken by this engine.  They are
propagated forward through the architecture (see :mod:`wan_obstacle.nn`) using
the same primitives, so a single reverse sweep differentiates losses that
contain both ``u`` and ``grad u``.

:class:`Eager` exposes the same primitive interface without recording, which
lets the network code run unchanged when no derivatives are needed.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Node",
    "Tape",
    "Eager",
    "NonFiniteError",
    "ShapeError",
    "finite_diff_gradient",
]


class ShapeError(ValueError):
    """Raised when a primitive receives inputs of incompatible shapes."""


class NonFiniteError(FloatingPointError):
    """Raised when a NaN or Inf shows up in a value or an adjoint."""


class Node:
    """One recorded value on a :class:`Tape`."""

    __slots__ = ("index", "kind", "value", "parents", "vjp", "requires_grad", "is_param")

    def __init__(self, index, kind, value, parents=(), vjp=None, requires_grad=False, is_param=False):
        self.index = index
        self.kind = kind
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.is_param = is_param

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(#{self.index}, {self.kind}, shape={self.value.shape})"


def _as2d(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"tape values must be at most 2D, got shape {arr.shape}")
    return arr


def _check_same(kind, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{kind}: shape mismatch {a.shape} vs {b.shape}")


class Tape:
    """Recorder for one forward/backward pass.

    Not thread safe; use one tape per logical thread.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.params: list[Node] = []
        self.adjoints: dict[int, np.ndarray] = {}

    # -- leaves ---------------------------------------------------------
    def _push(self, kind, value, parents=(), vjp=None):
        requires_grad = any(p.requires_grad for p in parents)
        node = Node(len(self.nodes), kind, value, tuple(parents), vjp, requires_grad)
        self.nodes.append(node)
        return node

    def const(self, value) -> Node:
        """A leaf that never receives a gradient (data, frozen weights, coordinates)."""
        return self._push("const", _as2d(value))

    def param(self, value) -> Node:
        """A leaf whose gradient is returned by :meth:`backward`."""
        node = Node(len(self.nodes), "param", _as2d(value), (), None, True, True)
        self.nodes.append(node)
        self.params.append(node)
        return node

    # -- primitives -----------------------------------------------------
    def affine(self, W: Node, x: Node, b: Node | None = None) -> Node:
        """``W @ x + b`` with ``b`` a column (one entry per output row) broadcast over points."""
        if W.shape[1] != x.shape[0]:
            raise ShapeError(f"affine: W{W.shape} incompatible with x{x.shape}")
        if b is not None and b.value.size != W.shape[0]:
            raise ShapeError(f"affine: bias of size {b.value.size} for W{W.shape}")
        out = W.value @ x.value
        if b is not None:
            out += b.value.reshape(-1, 1)
            parents = (W, x, b)
        else:
            parents = (W, x)
        Wv, xv = W.value, x.value
        bshape = None if b is None else b.value.shape

        def vjp(g):
            grads = [
                g @ xv.T if W.requires_grad else None,
                Wv.T @ g if x.requires_grad else None,
            ]
            if bshape is not None:
                grads.append(g.sum(axis=1).reshape(bshape) if b.requires_grad else None)
            return grads

        return self._push("affine", out, parents, vjp)

    def add(self, a: Node, b: Node) -> Node:
        _check_same("add", a.value, b.value)
        return self._push("add", a.value + b.value, (a, b), lambda g: (g, g))

    def hadamard(self, a: Node, b: Node) -> Node:
        _check_same("hadamard", a.value, b.value)
        av, bv = a.value, b.value
        return self._push("hadamard", av * bv, (a, b), lambda g: (g * bv, g * av))

    def tanh(self, a: Node) -> Node:
        s = np.tanh(a.value)
        return self._push("tanh", s, (a,), lambda g: (g * (1.0 - s * s),))

    def tanh_with_deriv(self, a: Node) -> tuple[Node, Node]:
        """``tanh(a)`` and ``1 - tanh(a)^2`` as two nodes sharing one evaluation."""
        s = np.tanh(a.value)
        d = 1.0 - s * s
        t = self._push("tanh", s, (a,), lambda g: (g * d,))
        dn = self._push("tanh-deriv", d, (a,), lambda g: (-2.0 * s * d * g,))
        return t, dn

    def square(self, a: Node) -> Node:
        av = a.value
        return self._push("square", av * av, (a,), lambda g: (2.0 * av * g,))

    def positive_part(self, a: Node) -> Node:
        mask = a.value > 0.0
        return self._push("positive-part", np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))

    def dot(self, a: Node, b: Node) -> Node:
        """Full contraction ``sum(a * b)`` to a scalar."""
        _check_same("dot", a.value, b.value)
        av, bv = a.value, b.value
        out = np.array([[np.sum(av * bv)]])
        return self._push("dot", out, (a, b), lambda g: (g[0, 0] * bv, g[0, 0] * av))

    def scale(self, a: Node, c: float, shift: float = 0.0) -> Node:
        """``c * a + shift`` for python scalars ``c`` and ``shift``."""
        c = float(c)
        out = c * a.value
        if shift:
            out = out + shift
        return self._push("scale", out, (a,), lambda g: (c * g,))

    def sum_mean(self, a: Node, factor: float = 1.0) -> Node:
        """``factor * mean(a)`` as a scalar; ``factor=|Omega|`` gives a Monte Carlo integral."""
        n = a.value.size
        c = float(factor) / n
        out = np.array([[c * np.sum(a.value)]])
        shape = a.value.shape
        return self._push("sum-mean", out, (a,), lambda g: (np.full(shape, c * g[0, 0]),))

    # -- reverse sweep --------------------------------------------------
    def backward(self, root: Node) -> np.ndarray:
        """Return d(root)/d(params) as one flat vector in registration order."""
        if root.value.size != 1:
            raise ShapeError(f"backward: root must be scalar, got shape {root.shape}")
        adj = {root.index: np.ones_like(root.value)}
        for node in reversed(self.nodes[: root.index + 1]):
            g = adj.get(node.index)
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = adj.get(parent.index)
                adj[parent.index] = pg if prev is None else prev + pg
        self.adjoints = adj
        pieces = []
        for p in self.params:
            g = adj.get(p.index)
            pieces.append(np.zeros(p.value.size) if g is None else g.reshape(-1))
        flat = np.concatenate(pieces) if pieces else np.zeros(0)
        if not np.all(np.isfinite(flat)):
            raise NonFiniteError(f"non-finite adjoint at {self._first_bad_adjoint()}")
        return flat

    def _first_bad_adjoint(self):
        for node in self.nodes:
            g = self.adjoints.get(node.index)
            if g is not None and not np.all(np.isfinite(g)):
                return node
        return None


class Eager:
    """Same primitive surface as :class:`Tape`, computing plain arrays only."""

    @staticmethod
    def const(value):
        return _as2d(value)

    param = const

    @staticmethod
    def affine(W, x, b=None):
        out = W @ x
        return out if b is None else out + b.reshape(-1, 1)

    @staticmethod
    def add(a, b):
        return a + b

    @staticmethod
    def hadamard(a, b):
        return a * b

    @staticmethod
    def tanh(a):
        return np.tanh(a)

    @staticmethod
    def tanh_with_deriv(a):
        s = np.tanh(a)
        return s, 1.0 - s * s

    @staticmethod
    def square(a):
        return a * a

    @staticmethod
    def positive_part(a):
        return np.maximum(a, 0.0)

    @staticmethod
    def dot(a, b):
        return np.array([[np.sum(a * b)]])

    @staticmethod
    def scale(a, c, shift=0.0):
        return c * a + shift if shift else c * a

    @staticmethod
    def sum_mean(a, factor=1.0):
        return np.array([[factor * np.sum(a) / a.size]])


def value_of(x) -> np.ndarray:
    """Array behind either a tape node or an eager array."""
    return x.value if isinstance(x, Node) else x


def finite_diff_gradient(
    loss: Callable[[np.ndarray], float],
    theta: np.ndarray,
    step: float = 1e-5,
    directions: Sequence[np.ndarray] | None = None,
) -> np.ndarray:
    """Central differences of ``loss`` at ``theta``.

    Without ``directions`` this returns the full gradient coordinate by
    coordinate.  With ``directions`` it returns one directional derivative
    per direction, which is how large parameter vectors are checked.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    theta = np.asarray(theta, dtype=np.float64)
    if directions is None:
        basis = np.eye(theta.size)
    else:
        basis = [np.asarray(d, dtype=np.float64) for d in directions]
    out = np.empty(len(basis))
    bad = []
    for i, e in enumerate(basis):
        hi = float(loss(theta + step * e))
        lo = float(loss(theta - step * e))
        if not (np.isfinite(hi) and np.isfinite(lo)):
            bad.append(i)
        out[i] = (hi - lo) / (2.0 * step)
    if bad:
        raise NonFiniteError(f"non-finite loss at coordinates/directions {bad}")
    return out
