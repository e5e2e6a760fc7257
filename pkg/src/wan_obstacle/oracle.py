"""Finite-difference reference solver for the obstacle problems.

Central differences on a uniform grid, solved by projected successive
over-relaxation: every sweep visits the interior nodes in lexicographic order
and sets ``u_i <- max(psi_i, (1 - omega) u_i + omega * GS_i)``.  Boundary nodes
carry the Dirichlet data exactly.  The sweeps are compiled with numba.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numba
import numpy as np

from .problems import ProblemSpec

__all__ = [
    "GridSolution",
    "optimal_omega",
    "psor_solve_1d",
    "pgs_solve_2d",
    "discrete_residual",
    "complementarity_defect",
    "grid_error",
    "write_csv",
]


@dataclass
class GridSolution:
    """Nodal solution on a uniform grid (boundary nodes included).

    ``axes`` holds one coordinate vector per dimension; ``u``, ``psi`` and
    ``f`` are indexed ``[i]`` in 1D and ``[i, j]`` (x, y) in 2D.
    """

    problem: str
    axes: tuple[np.ndarray, ...]
    u: np.ndarray
    psi: np.ndarray
    f: np.ndarray
    spacing: tuple[float, ...]
    omega: float
    iterations: int
    converged: bool
    drift: tuple[float, ...] = ()
    reaction: float = 0.0

    @property
    def h_grid(self) -> float:
        return max(self.spacing)

    def points(self) -> np.ndarray:
        """Node coordinates, shape (n_nodes, dim), in the same order as ``u.ravel()``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


def optimal_omega(h_ratio: float) -> float:
    """Relaxation factor 2 / (1 + sin(pi h / L)) of the model Laplacian."""
    return 2.0 / (1.0 + math.sin(math.pi * h_ratio))


# ---------------------------------------------------------------------------
# compiled sweeps


@numba.njit(cache=True)
def _psor_1d(u, psi, f, h, b, k, omega, tol, max_iters):
    n = u.shape[0]
    lo = 1.0 / (h * h) + b / (2.0 * h)
    hi = 1.0 / (h * h) - b / (2.0 * h)
    diag = 2.0 / (h * h) + k
    for it in range(1, max_iters + 1):
        delta = 0.0
        for i in range(1, n - 1):
            gs = (f[i] + lo * u[i - 1] + hi * u[i + 1]) / diag
            new = (1.0 - omega) * u[i] + omega * gs
            if new < psi[i]:
                new = psi[i]
            d = abs(new - u[i])
            if d > delta:
                delta = d
            u[i] = new
        if delta <= tol:
            return it, True
    return max_iters, False


@numba.njit(cache=True)
def _psor_2d(u, psi, f, hx, hy, bx, by, k, omega, tol, max_iters):
    nx, ny = u.shape
    cx, cy = 1.0 / (hx * hx), 1.0 / (hy * hy)
    west, east = cx + bx / (2.0 * hx), cx - bx / (2.0 * hx)
    south, north = cy + by / (2.0 * hy), cy - by / (2.0 * hy)
    diag = 2.0 * cx + 2.0 * cy + k
    for it in range(1, max_iters + 1):
        delta = 0.0
        for i in range(1, nx - 1):
            for j in range(1, ny - 1):
                gs = (f[i, j] + west * u[i - 1, j] + east * u[i + 1, j] + south * u[i, j - 1] + north * u[i, j + 1]) / diag
                new = (1.0 - omega) * u[i, j] + omega * gs
                if new < psi[i, j]:
                    new = psi[i, j]
                d = abs(new - u[i, j])
                if d > delta:
                    delta = d
                u[i, j] = new
        if delta <= tol:
            return it, True
    return max_iters, False


# ---------------------------------------------------------------------------
# drivers


def _check_drift_stability(drift, spacing):
    for b, h in zip(drift, spacing):
        if b != 0 and not h < 2.0 / abs(b):
            raise ValueError(f"central drift needs h < 2/|b| for an M-matrix; h={h:g}, |b|={abs(b):g}")


def _initial_guess(psi, boundary_mask, boundary_vals):
    u = np.maximum(psi, 0.0)
    u[boundary_mask] = boundary_vals
    return u


def psor_solve_1d(
    problem: ProblemSpec,
    M: int,
    omega: float | None = None,
    tol: float = 1e-10,
    max_iters: int = 2_000_000,
    obstacle: np.ndarray | None = None,
    initial: np.ndarray | None = None,
) -> GridSolution:
    """Solve a 1D problem on ``M`` interior nodes (``M + 2`` nodes in total).

    ``omega=None`` picks the optimal relaxation factor of the model problem.
    ``obstacle`` overrides the nodal obstacle (``-inf`` disables it) and
    ``initial`` sets the starting iterate.
    """
    if problem.dim != 1:
        raise ValueError(f"{problem.name} is not one-dimensional")
    if M < 3:
        raise ValueError("need at least 3 interior nodes")
    if tol <= 0:
        raise ValueError("tol must be positive")
    (a,), (b,) = problem.domain.lower, problem.domain.upper
    x = np.linspace(a, b, M + 2)
    h = (b - a) / (M + 1)
    _check_drift_stability(problem.drift, (h,))
    omega = optimal_omega(1.0 / (M + 1)) if omega is None else float(omega)
    if not 0.0 < omega < 2.0:
        raise ValueError("omega must lie in (0, 2)")
    pts = x[:, None]
    psi = problem.obstacle(pts).astype(np.float64) if obstacle is None else np.asarray(obstacle, dtype=np.float64).copy()
    f = problem.source(pts).astype(np.float64)
    edge = np.zeros(M + 2, dtype=bool)
    edge[[0, -1]] = True
    g = problem.boundary(pts[edge])
    psi[edge] = np.minimum(psi[edge], g)
    if initial is None:
        u = _initial_guess(np.where(np.isfinite(psi), psi, 0.0), edge, g)
    else:
        u = np.asarray(initial, dtype=np.float64).copy()
        u[edge] = g
    iters, ok = _psor_1d(u, psi, f, h, float(problem.drift[0]), float(problem.reaction), omega, tol, max_iters)
    return GridSolution(problem.name, (x,), u, psi, f, (h,), omega, int(iters), bool(ok), problem.drift, problem.reaction)


def pgs_solve_2d(
    problem: ProblemSpec,
    Mx: int,
    My: int | None = None,
    omega: float | None = None,
    tol: float = 1e-10,
    max_iters: int = 500_000,
    initial: np.ndarray | None = None,
) -> GridSolution:
    """Solve a 2D problem on an ``Mx x My`` node grid (boundary nodes included).

    ``omega=1`` is plain projected Gauss-Seidel; the default ``None`` uses the
    optimal over-relaxation factor for the finer axis.
    """
    if problem.dim != 2:
        raise ValueError(f"{problem.name} is not two-dimensional")
    My = Mx if My is None else My
    if Mx < 5 or My < 5:
        raise ValueError("grid must be at least 5 x 5")
    if tol <= 0:
        raise ValueError("tol must be positive")
    (ax, ay), (bx, by) = problem.domain.lower, problem.domain.upper
    xs, ys = np.linspace(ax, bx, Mx), np.linspace(ay, by, My)
    hx, hy = (bx - ax) / (Mx - 1), (by - ay) / (My - 1)
    _check_drift_stability(problem.drift, (hx, hy))
    omega = optimal_omega(1.0 / (max(Mx, My) - 1)) if omega is None else float(omega)
    if not 0.0 < omega < 2.0:
        raise ValueError("omega must lie in (0, 2)")
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    psi = problem.obstacle(pts).reshape(Mx, My).astype(np.float64)
    f = problem.source(pts).reshape(Mx, My).astype(np.float64)
    edge = np.zeros((Mx, My), dtype=bool)
    edge[[0, -1], :] = True
    edge[:, [0, -1]] = True
    g = problem.boundary(pts[edge.ravel()])
    psi[edge] = np.minimum(psi[edge], g)
    u = _initial_guess(psi, edge, g) if initial is None else np.asarray(initial, dtype=np.float64).copy()
    u[edge] = g
    bxd, byd = (float(c) for c in problem.drift)
    iters, ok = _psor_2d(u, psi, f, hx, hy, bxd, byd, float(problem.reaction), omega, tol, max_iters)
    return GridSolution(problem.name, (xs, ys), u, psi, f, (hx, hy), omega, int(iters), bool(ok), problem.drift, problem.reaction)


# ---------------------------------------------------------------------------
# diagnostics


def discrete_residual(sol: GridSolution) -> np.ndarray:
    """``A_h u - f`` at the interior nodes (central differences, drift included)."""
    u = sol.u
    if u.ndim == 1:
        (h,) = sol.spacing
        (b,) = sol.drift or (0.0,)
        lap = (u[:-2] - 2 * u[1:-1] + u[2:]) / h**2
        adv = b * (u[2:] - u[:-2]) / (2 * h)
        return -lap + adv + sol.reaction * u[1:-1] - sol.f[1:-1]
    hx, hy = sol.spacing
    bx, by = sol.drift or (0.0, 0.0)
    c = u[1:-1, 1:-1]
    lap = (u[:-2, 1:-1] - 2 * c + u[2:, 1:-1]) / hx**2 + (u[1:-1, :-2] - 2 * c + u[1:-1, 2:]) / hy**2
    adv = bx * (u[2:, 1:-1] - u[:-2, 1:-1]) / (2 * hx) + by * (u[1:-1, 2:] - u[1:-1, :-2]) / (2 * hy)
    return -lap + adv + sol.reaction * c - sol.f[1:-1, 1:-1]


def complementarity_defect(sol: GridSolution) -> float:
    """max_i |min(u_i - psi_i, (A_h u - f)_i / D_ii)| over interior nodes.

    The residual is scaled by the diagonal ``D_ii`` of ``A_h`` so that it is
    measured in the same units as the relaxation update.
    """
    if sol.u.ndim == 1:
        diag = 2.0 / sol.spacing[0] ** 2 + sol.reaction
        gap = sol.u[1:-1] - sol.psi[1:-1]
    else:
        hx, hy = sol.spacing
        diag = 2.0 / hx**2 + 2.0 / hy**2 + sol.reaction
        gap = sol.u[1:-1, 1:-1] - sol.psi[1:-1, 1:-1]
    return float(np.max(np.abs(np.minimum(gap, discrete_residual(sol) / diag))))


def grid_error(sol: GridSolution, exact) -> float:
    """L-infinity distance between the nodal solution and a closed form."""
    ref = exact(sol.points()).reshape(sol.u.shape)
    return float(np.max(np.abs(sol.u - ref)))


def write_csv(sol: GridSolution, path) -> None:
    """Columns ``x,u`` (1D) or ``x,y,u`` (2D), one row per node."""
    names = ["x", "y"][: len(sol.axes)]
    pts = sol.points()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, "u"])
        for p, val in zip(pts, sol.u.ravel()):
            w.writerow([*(repr(float(c)) for c in p), repr(float(val))])
