"""DRR and FFN networks with coupled value and spatial-gradient propagation.

Points are passed as arrays of shape ``(N, n)``.  Inside the forward pass the
hidden state is laid out as ``(width, N)`` and every input direction ``j``
carries a tangent array of the same shape, so that ``grad u`` is assembled
from the same recorded primitives as ``u`` itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .autodiff import Eager, value_of
from .domain import Box

__all__ = [
    "Architecture",
    "ParamView",
    "Segment",
    "NetworkParams",
    "Eta",
    "BcWrapper",
    "NetEval",
    "param_count",
    "init_params",
    "forward_value_grad",
    "wrap_bc",
    "build_eta",
    "evaluate",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class Architecture:
    kind: str = "DRR"
    depth: int = 4
    width: int = 80
    input_dim: int = 1
    activation: str = "tanh"

    def __post_init__(self):
        if self.kind not in ("DRR", "FFN"):
            raise ValueError(f"unknown architecture kind {self.kind!r}")
        if min(self.depth, self.width, self.input_dim) < 1:
            raise ValueError("depth, width and input_dim must be positive")
        if self.kind == "DRR" and self.width < self.input_dim:
            raise ValueError("DRR requires width >= input_dim")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")


def _layer_shapes(arch: Architecture):
    """(name, weight shape, bias shape) in parameter-vector order."""
    w, n = arch.width, arch.input_dim
    shapes = [("0", (w, n), (w,))]
    if arch.kind == "DRR":
        for i in range(1, arch.depth + 1):
            shapes.append((f"{i}1", (w, w), (w,)))
            shapes.append((f"{i}2", (w, w), (w,)))
    else:
        for i in range(1, arch.depth + 1):
            shapes.append((f"{i}", (w, w), (w,)))
    shapes.append(("out", (1, w), (1,)))
    return shapes


def param_count(arch: Architecture) -> int:
    d, w, n = arch.depth, arch.width, arch.input_dim
    if arch.kind == "DRR":
        return 2 * d * w * w + (n + 2 * d + 2) * w + 1
    return n * w + w + d * (w * w + w) + w + 1


@dataclass(frozen=True)
class Segment:
    name: str
    offset: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return math.prod(self.shape)


@dataclass(frozen=True)
class ParamView:
    segments: tuple[Segment, ...]

    @classmethod
    def for_arch(cls, arch: Architecture) -> ParamView:
        segs = []
        offset = 0
        for name, wshape, bshape in _layer_shapes(arch):
            for prefix, shape in (("A", wshape), ("b", bshape)):
                seg = Segment(prefix + name, offset, shape)
                segs.append(seg)
                offset += seg.size
        return cls(tuple(segs))

    @property
    def size(self) -> int:
        last = self.segments[-1]
        return last.offset + last.size

    def unpack(self, theta: np.ndarray) -> list[np.ndarray]:
        """Views (no copies) of each weight/bias inside ``theta``."""
        return [theta[s.offset : s.offset + s.size].reshape(s.shape) for s in self.segments]


@dataclass
class NetworkParams:
    arch: Architecture
    theta: np.ndarray
    view: ParamView = field(init=False)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.view = ParamView.for_arch(self.arch)
        if self.theta.shape != (self.view.size,):
            raise ValueError(f"theta has shape {self.theta.shape}, expected ({self.view.size},)")

    def copy(self) -> NetworkParams:
        return NetworkParams(self.arch, self.theta.copy())


def init_params(arch: Architecture, seed) -> NetworkParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
    rng = np.random.default_rng(seed)
    view = ParamView.for_arch(arch)
    theta = np.empty(view.size)
    segs = iter(view.segments)
    for _, wshape, _ in _layer_shapes(arch):
        bound = 1.0 / math.sqrt(wshape[1])
        for seg in (next(segs), next(segs)):
            theta[seg.offset : seg.offset + seg.size] = rng.uniform(-bound, bound, seg.size)
    return NetworkParams(arch, theta)


class NetEval(NamedTuple):
    """Network output at a batch: ``u`` is (1, N), ``grad[j]`` is d u / d x_j, (1, N)."""

    u: object
    grad: list


def forward_value_grad(params: NetworkParams, x: np.ndarray, tape=None, trainable=True, spatial_grad=True) -> NetEval:
    """Evaluate the network and its exact spatial gradient at points ``x``.

    With a :class:`Tape`, every step is recorded and the weights are
    registered as parameters when ``trainable`` (constants otherwise).
    With ``tape=None`` the same recursion runs eagerly on plain arrays.
    ``spatial_grad=False`` skips the tangents and returns an empty ``grad``.
    """
    ops = Eager if tape is None else tape
    arch = params.arch
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    N, n = x.shape
    if n != arch.input_dim:
        raise ValueError(f"points have dimension {n}, network expects {arch.input_dim}")
    leaf = ops.param if trainable else ops.const
    mats = [leaf(m) for m in params.view.unpack(params.theta)]
    weights, biases = mats[0::2], mats[1::2]

    xin = ops.const(x.T)
    # d x / d x_j is the j-th unit vector at every point
    dirs = []
    for j in range(n if spatial_grad else 0):
        e = np.zeros((n, N))
        e[j] = 1.0
        dirs.append(ops.const(e))

    act = ops.tanh_with_deriv

    if arch.kind == "DRR":
        f = ops.affine(weights[0], xin, biases[0])
        t = [ops.affine(weights[0], e) for e in dirs]
        hist = [(f, t)]
        for layer in range(1, 2 * arch.depth + 1):
            f_prev, t_prev = hist[-1]
            s, ds = act(ops.affine(weights[layer], f_prev, biases[layer]))
            t_new = [ops.hadamard(ds, ops.affine(weights[layer], tj)) for tj in t_prev]
            if layer % 2 == 0:
                f_skip, t_skip = hist[-2]
                s = ops.add(s, f_skip)
                t_new = [ops.add(a, b) for a, b in zip(t_new, t_skip)]
            hist.append((s, t_new))
        f, t = hist[-1]
    else:
        f, ds = act(ops.affine(weights[0], xin, biases[0]))
        t = [ops.hadamard(ds, ops.affine(weights[0], e)) for e in dirs]
        for layer in range(1, arch.depth + 1):
            f, ds = act(ops.affine(weights[layer], f, biases[layer]))
            t = [ops.hadamard(ds, ops.affine(weights[layer], tj)) for tj in t]

    u = ops.affine(weights[-1], f, biases[-1])
    grad = [ops.affine(weights[-1], tj) for tj in t]
    return NetEval(u, grad)


# ---------------------------------------------------------------------------
# boundary conditions


class Eta:
    """Cutoff ``eta`` vanishing on the boundary of a box, normalised to max 1.

    Per axis the factor is ``4 (x - a)(b - x) / (b - a)^2``; in 2D the factors
    are multiplied.
    """

    def __init__(self, domain: Box):
        if domain.dim not in (1, 2):
            raise ValueError(f"eta is only built for intervals and rectangles, got dim {domain.dim}")
        self.domain = domain

    def __call__(self, x):
        """Values (N,) and gradients (N, n) at points ``x`` of shape (N, n)."""
        x = np.atleast_2d(x)
        lo = np.asarray(self.domain.lower)
        hi = np.asarray(self.domain.upper)
        L2 = (hi - lo) ** 2
        fac = 4.0 * (x - lo) * (hi - x) / L2
        dfac = 4.0 * ((hi - x) - (x - lo)) / L2
        val = np.prod(fac, axis=1)
        grad = np.empty_like(x)
        for j in range(x.shape[1]):
            others = np.prod(np.delete(fac, j, axis=1), axis=1) if x.shape[1] > 1 else 1.0
            grad[:, j] = dfac[:, j] * others
        return val, grad


def build_eta(domain: Box) -> Eta:
    if not isinstance(domain, Box):
        raise TypeError(f"unsupported domain {domain!r}")
    return Eta(domain)


@dataclass
class BcWrapper:
    """``u = u_raw * eta + lift``; ``lift=None`` means a zero lift."""

    eta: Eta
    lift: NetworkParams | None = None

    def data(self, x):
        """eta, grad eta, lift, grad lift at ``x`` as arrays (N,), (N, n), (N,), (N, n)."""
        eta, deta = self.eta(x)
        if self.lift is None:
            return eta, deta, np.zeros(len(x)), np.zeros_like(deta)
        hv, hg = evaluate(self.lift, x)
        return eta, deta, hv, hg


def wrap_bc(raw: NetEval, bc_data, tape=None) -> NetEval:
    """Apply the cutoff-and-lift output layer to a raw network evaluation.

    ``bc_data`` is the tuple returned by :meth:`BcWrapper.data` for the same points.
    """
    ops = Eager if tape is None else tape
    eta, deta, lift, dlift = bc_data
    eta_n = ops.const(eta)
    u = ops.add(ops.hadamard(raw.u, eta_n), ops.const(lift))
    grad = []
    for j, gj in enumerate(raw.grad):
        term = ops.add(ops.hadamard(gj, eta_n), ops.hadamard(raw.u, ops.const(deta[:, j])))
        grad.append(ops.add(term, ops.const(dlift[:, j])))
    return NetEval(u, grad)


def evaluate(params: NetworkParams, x, bc: BcWrapper | None = None, chunk: int = 8192):
    """Plain-array evaluation for large point sets: (u (N,), grad (N, n))."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    us, gs = [], []
    for start in range(0, len(x), chunk):
        xc = x[start : start + chunk]
        out = forward_value_grad(params, xc)
        if bc is not None:
            out = wrap_bc(out, bc.data(xc))
        us.append(value_of(out.u)[0])
        gs.append(np.stack([value_of(g)[0] for g in out.grad], axis=1))
    return np.concatenate(us), np.concatenate(gs)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params: NetworkParams, path) -> None:
    a = params.arch
    with open(path, "wb") as fh:
        fh.write(f"{a.kind} n={a.input_dim} d={a.depth} w={a.width}\n".encode("ascii"))
        fh.write(params.theta.astype("<f8").tobytes())


def load_checkpoint(path) -> NetworkParams:
    raw = Path(path).read_bytes()
    header, _, body = raw.partition(b"\n")
    kind, *fields = header.decode("ascii").split()
    kv = dict(f.split("=") for f in fields)
    arch = Architecture(kind=kind, depth=int(kv["d"]), width=int(kv["w"]), input_dim=int(kv["n"]))
    theta = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return NetworkParams(arch, theta)

