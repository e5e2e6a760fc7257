"""Error norms against closed-form solutions and complementarity diagnostics.

A *model* here is any callable ``x -> (u (N,), grad u (N, n))``;
:func:`network_model` adapts a (wrapped) network and :func:`exact_model` a
problem's closed form.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .domain import Box
from .nn import BcWrapper, NetworkParams, evaluate
from .problems import ProblemSpec, eval_exact

__all__ = [
    "EvalGrid",
    "ErrorReport",
    "ComplementarityReport",
    "eval_grid",
    "network_model",
    "exact_model",
    "errors",
    "complementarity_report",
    "boxplot_data",
    "write_percentile_csv",
    "DEFAULT_NODES",
]

Model = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]

# nodes per axis of the evaluation grids
DEFAULT_NODES = {1: 4096, 2: 256}


@dataclass(frozen=True)
class EvalGrid:
    points: np.ndarray  # (N, n)
    weights: np.ndarray  # trapezoid weights, (N,)
    shape: tuple[int, ...]
    spacing: tuple[float, ...]

    @property
    def descriptor(self) -> str:
        return "x".join(str(s) for s in self.shape)


def _trapezoid(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[[0, -1]] = h / 2
    return w


def eval_grid(domain: Box, nodes: int | None = None) -> EvalGrid:
    """Uniform tensor grid over the closed box with trapezoid weights."""
    nodes = DEFAULT_NODES[domain.dim] if nodes is None else int(nodes)
    if nodes < 2:
        raise ValueError("need at least two nodes per axis")
    axes = [np.linspace(lo, hi, nodes) for lo, hi in zip(domain.lower, domain.upper)]
    hs = tuple(float(a[1] - a[0]) for a in axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    w = _trapezoid(nodes, hs[0])
    for h in hs[1:]:
        w = np.outer(w, _trapezoid(nodes, h)).ravel()
    return EvalGrid(pts, w, (nodes,) * domain.dim, hs)


def network_model(params: NetworkParams, bc: BcWrapper | None = None) -> Model:
    return lambda x: evaluate(params, x, bc)


def exact_model(problem: ProblemSpec) -> Model:
    return lambda x: eval_exact(problem, x)


@dataclass(frozen=True)
class ErrorReport:
    l2: float
    linf: float
    h1: float
    n_eval: int
    grid: str


def errors(model: Model, problem: ProblemSpec, grid: EvalGrid | None = None) -> ErrorReport:
    """L2, L-infinity and full H1 errors of ``model`` against the closed form."""
    grid = eval_grid(problem.domain) if grid is None else grid
    u, du = model(grid.points)
    ue, due = eval_exact(problem, grid.points)
    e = u - ue
    sq = float(np.dot(grid.weights, e * e))
    sq_grad = float(np.dot(grid.weights, np.sum((du - due) ** 2, axis=1)))
    return ErrorReport(
        l2=float(np.sqrt(sq)),
        linf=float(np.max(np.abs(e))),
        h1=float(np.sqrt(sq + sq_grad)),
        n_eval=len(grid.points),
        grid=grid.descriptor,
    )


@dataclass(frozen=True)
class ComplementarityReport:
    negativity: float  # max (psi - u)^+
    residual: float  # max (-(A u - f))^+
    product: float  # max |(A u - f)(u - psi)|
    h_grid: float


def complementarity_report(model: Model, problem: ProblemSpec, nodes: int = 257) -> ComplementarityReport:
    """Pointwise violations of ``u >= psi``, ``Au >= f`` and ``(Au - f)(u - psi) = 0``.

    ``Au`` is formed by second-order central differences of the model's
    values on a uniform ``nodes``-per-axis grid; the maxima run over interior
    nodes.
    """
    grid = eval_grid(problem.domain, nodes)
    if min(grid.spacing) <= 0:
        raise ValueError("grid spacing must be positive")
    u, _ = model(grid.points)
    u = u.reshape(grid.shape)
    psi = problem.obstacle(grid.points).reshape(grid.shape)
    f = problem.source(grid.points).reshape(grid.shape)
    inner = (slice(1, -1),) * problem.dim
    Au = problem.reaction * u[inner]
    for axis, (h, b) in enumerate(zip(grid.spacing, problem.drift)):
        fwd = _shift(u, axis, +1)
        bwd = _shift(u, axis, -1)
        Au = Au - (fwd - 2 * u[inner] + bwd) / h**2 + b * (fwd - bwd) / (2 * h)
    res = Au - f[inner]
    gap = u[inner] - psi[inner]
    return ComplementarityReport(
        negativity=float(np.max(np.maximum(-gap, 0.0))),
        residual=float(np.max(np.maximum(-res, 0.0))),
        product=float(np.max(np.abs(res * gap))),
        h_grid=float(max(grid.spacing)),
    )


def _shift(u, axis, step):
    idx = [slice(1, -1)] * u.ndim
    idx[axis] = slice(1 + step, u.shape[axis] - 1 + step)
    return u[tuple(idx)]


def boxplot_data(records: Iterable) -> dict[str, tuple[float, float, float]]:
    """25th/50th/75th percentiles of the final L2 error per problem.

    Each record needs ``problem`` and ``final`` (a row with ``error_l2``);
    percentiles interpolate linearly between order statistics.
    """
    groups: dict[str, list[float]] = {}
    for rec in records:
        groups.setdefault(rec.problem, []).append(float(rec.final.error_l2))
    if sum(len(v) for v in groups.values()) < 2:
        raise ValueError("need at least two records")
    return {
        name: tuple(float(q) for q in np.percentile(np.sort(vals), [25, 50, 75], method="linear"))
        for name, vals in sorted(groups.items())
    }


def write_percentile_csv(table: dict[str, tuple[float, float, float]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["example", "p25", "p50", "p75"])
        for name, qs in sorted(table.items()):
            w.writerow([name, *(repr(q) for q in qs)])
