"""The six benchmark obstacle problems.

Each problem is ``find u >= psi`` in ``Omega`` with ``u = h`` on the boundary
for the operator ``A u = -lap u + b . grad u + k u``.  All data callables take
points of shape ``(N, n)`` and return arrays of shape ``(N,)`` (gradients:
``(N, n)``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .domain import Box

log = logging.getLogger(__name__)

__all__ = [
    "ProblemSpec",
    "REGISTRY",
    "get_problem",
    "eval_exact",
    "example1",
    "example2",
    "example3",
    "example4",
    "example5",
    "example6",
    "EXAMPLE3_BETA",
]

Field = Callable[[np.ndarray], np.ndarray]

# gap weight 1/(2 gamma) by spatial dimension
DEFAULT_GAP_WEIGHT = {1: 1e-4, 2: 5e-4}
FD_STEP = 1e-6


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    domain: Box
    source: Field
    obstacle: Field
    boundary: Field
    drift: tuple[float, ...] = ()
    reaction: float = 0.0
    exact: Field | None = None
    exact_grad: Field | None = None
    gamma_weight: float = field(default=None)  # filled from the dimension when None

    def __post_init__(self):
        if not self.drift:
            object.__setattr__(self, "drift", (0.0,) * self.domain.dim)
        if len(self.drift) != self.domain.dim:
            raise ValueError("drift must have one entry per dimension")
        if self.reaction < 0:
            raise ValueError("reaction coefficient must be nonnegative")
        if self.gamma_weight is None:
            object.__setattr__(self, "gamma_weight", DEFAULT_GAP_WEIGHT[self.domain.dim])

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def has_exact(self) -> bool:
        return self.exact is not None

    @property
    def homogeneous(self) -> bool:
        """True when the boundary data vanishes identically (checked on the edges)."""
        from .sampler import boundary_grid

        return bool(np.all(self.boundary(boundary_grid(self.domain, 64)) == 0.0))

    def check_invariants(self, n_interior=10_000, n_boundary=1_000, tol=1e-9, seed=0) -> dict:
        """Raise ``ValueError`` on violated data invariants; return diagnostics."""
        from scipy.stats import qmc

        from .sampler import boundary_grid

        lo, hi = np.asarray(self.domain.lower), np.asarray(self.domain.upper)
        xi = qmc.scale(qmc.Halton(d=self.dim, seed=seed).random(n_interior), lo, hi)
        xb = boundary_grid(self.domain, n_boundary)
        gap_b = self.obstacle(xb) - self.boundary(xb)
        if np.max(gap_b) > tol:
            raise ValueError(f"{self.name}: obstacle exceeds boundary data by {np.max(gap_b):.3e}")
        report = {"psi_minus_h_max": float(np.max(gap_b))}
        if self.exact is not None:
            below = np.max(self.obstacle(xi) - self.exact(xi))
            mismatch = np.max(np.abs(self.exact(xb) - self.boundary(xb)))
            report.update(obstacle_violation=float(below), boundary_mismatch=float(mismatch))
            if below > tol:
                raise ValueError(f"{self.name}: exact solution below obstacle by {below:.3e}")
            if mismatch > tol:
                raise ValueError(f"{self.name}: exact solution misses boundary data by {mismatch:.3e}")
        return report


def _x(p):
    return np.atleast_2d(p)[:, 0]


def _y(p):
    return np.atleast_2d(p)[:, 1]


def _zero(p):
    return np.zeros(len(np.atleast_2d(p)))


def fd_gradient(fn: Field, x, step=FD_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar field, (N, n)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    out = np.empty_like(x)
    for j in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[j] = step
        out[:, j] = (fn(x + e) - fn(x - e)) / (2 * step)
    return out


# ---------------------------------------------------------------------------
# Example 1: Omega = (0, 1), -u'' with a piecewise quadratic obstacle

_C1 = 1.0 / (2.0 * math.sqrt(2.0))
_S1 = 100.0 - 50.0 * math.sqrt(2.0)


def _ex1_psi(p):
    x = _x(p)
    r = np.where(x > 0.5, 1.0 - x, x)
    return np.where(r <= 0.25, 100.0 * r**2, 100.0 * r * (1.0 - r) - 12.5)


def _ex1_u(p):
    x = _x(p)
    return np.select(
        [x < _C1, x < 1.0 - _C1],
        [_S1 * x, 100.0 * x * (1.0 - x) - 12.5],
        _S1 * (1.0 - x),
    )


def _ex1_du(p):
    x = _x(p)
    d = np.select([x < _C1, x < 1.0 - _C1], [np.full_like(x, _S1), 100.0 - 200.0 * x], np.full_like(x, -_S1))
    return d[:, None]


def example1() -> ProblemSpec:
    return ProblemSpec(
        name="example1",
        domain=Box.interval(0.0, 1.0),
        source=_zero,
        obstacle=_ex1_psi,
        boundary=_zero,
        exact=_ex1_u,
        exact_grad=_ex1_du,
    )


# ---------------------------------------------------------------------------
# Example 2: Omega = (-2, 2), -u'' + u' (non-symmetric)

_R3 = math.sqrt(3.0)
_A2 = 4.0 - 2.0 * _R3


def _ex2_f(p):
    x = _x(p)
    return np.select(
        [(x >= -2) & (x < -2 + _R3), (x >= 2 - _R3) & (x <= 2), (x >= -2 + _R3) & (x <= 2 - _R3)],
        [np.full_like(x, _A2), np.full_like(x, -_A2), np.full_like(x, -(2 * _R3 - 2))],
        0.0,
    )


def _ex2_psi(p):
    x = _x(p)
    return 1.0 - x**2


def _ex2_u(p):
    x = _x(p)
    return np.select([x < -2 + _R3, x < 2 - _R3], [_A2 * (x + 2), 1.0 - x**2], _A2 * (2 - x))


def _ex2_du(p):
    x = _x(p)
    d = np.select([x < -2 + _R3, x < 2 - _R3], [np.full_like(x, _A2), -2.0 * x], np.full_like(x, -_A2))
    return d[:, None]


def example2() -> ProblemSpec:
    return ProblemSpec(
        name="example2",
        domain=Box.interval(-2.0, 2.0),
        source=_ex2_f,
        obstacle=_ex2_psi,
        boundary=_zero,
        drift=(1.0,),
        exact=_ex2_u,
        exact_grad=_ex2_du,
    )


# ---------------------------------------------------------------------------
# Example 3: Omega = (-1, 1), piecewise smooth obstacle built from a C_c^inf bump

EXAMPLE3_ALPHA = 0.4
EXAMPLE3_BETA = 0.02376


def _mu(t):
    t = np.asarray(t, dtype=np.float64)
    safe = np.where(t > 0, t, 1.0)
    return np.where(t > 0, np.exp(-1.0 / safe), 0.0)


def bump(t):
    """Smooth cutoff: 1 on |t| < 0.3, 0 on |t| > 0.4."""
    a = np.abs(t)
    return _mu(0.4 - a) / (_mu(a - 0.3) + _mu(0.4 - a))


def _ex3_psi_1d(x):
    c = np.where(x <= 0, x + 0.5, x - 0.5)
    return bump(c) * (1.5 - 12.0 * np.abs(c) ** (2 - EXAMPLE3_ALPHA)) - 0.5


def _ex3_psi(p):
    return _ex3_psi_1d(_x(p))


def _ex3_u(p):
    x = _x(p)
    b = EXAMPLE3_BETA
    left = _ex3_psi_1d(np.array(-b - 0.5)) * (x + 1) / (0.5 - b)
    right = _ex3_psi_1d(np.array(b + 0.5)) * (x - 1) / (b - 0.5)
    return np.select(
        [x < -b - 0.5, x < -0.5, x < 0.5, x < 0.5 + b],
        [left, _ex3_psi_1d(x), np.ones_like(x), _ex3_psi_1d(x)],
        right,
    )


def example3_beta_residual(beta=EXAMPLE3_BETA) -> float:
    """Residual of the tangency condition psi(-beta-1/2) = (1/2-beta) psi'(-beta-1/2)."""
    x0 = np.array([[-beta - 0.5]])
    dpsi = fd_gradient(_ex3_psi, x0)[0, 0]
    return float(_ex3_psi(x0)[0] - (0.5 - beta) * dpsi)


def example3() -> ProblemSpec:
    log.debug("example3: beta=%g, tangency residual %.3e", EXAMPLE3_BETA, example3_beta_residual())
    return ProblemSpec(
        name="example3",
        domain=Box.interval(-1.0, 1.0),
        source=_zero,
        obstacle=_ex3_psi,
        boundary=_zero,
        exact=_ex3_u,
        exact_grad=None,  # finite differences of the closed form
    )


# ---------------------------------------------------------------------------
# Example 4: Omega = (0, 1)^2, zero obstacle, source from an optimal control problem


def z1(x):
    return -4096 * x**6 + 6144 * x**5 - 3072 * x**4 + 512 * x**3


def z2(x):
    return -244.140625 * x**6 + 585.9375 * x**5 - 468.75 * x**4 + 125 * x**3


def dz1(x):
    return -24576 * x**5 + 30720 * x**4 - 12288 * x**3 + 1536 * x**2


def dz2(x):
    return -1464.84375 * x**5 + 2929.6875 * x**4 - 1875.0 * x**3 + 375 * x**2


def d2z1(x):
    return -122880 * x**4 + 122880 * x**3 - 36864 * x**2 + 3072 * x


def d2z2(x):
    return -7324.21875 * x**4 + 11718.75 * x**3 - 5625.0 * x**2 + 750 * x


def _ex4_region(x, y):
    return (x < 0.5) & (y < 0.8)


def _ex4_f(p):
    x, y = _x(p), _y(p)
    zeta = np.where((x > 0.5) & (x < 1) & (y > 0) & (y < 0.8), z1(x - 0.5) * z2(y), 0.0)
    lap = np.where(_ex4_region(x, y), z1(x) * d2z2(y) + d2z1(x) * z2(y), 0.0)
    return -zeta - lap


def _ex4_u(p):
    x, y = _x(p), _y(p)
    return np.where(_ex4_region(x, y), z1(x) * z2(y), 0.0)


def _ex4_du(p):
    x, y = _x(p), _y(p)
    inside = _ex4_region(x, y)
    return np.stack([np.where(inside, dz1(x) * z2(y), 0.0), np.where(inside, z1(x) * dz2(y), 0.0)], axis=1)


def example4_printed_solution(p):
    """The solution formula as typeset (kept for the oracle cross-check only)."""
    x, y = _x(p), _y(p)
    return np.where(_ex4_region(x, y), z1(x) * d2z2(y) + d2z1(x) * z2(y), 0.0)


def example4() -> ProblemSpec:
    return ProblemSpec(
        name="example4",
        domain=Box.rectangle(0.0, 1.0, 0.0, 1.0),
        source=_ex4_f,
        obstacle=_zero,
        boundary=_zero,
        exact=_ex4_u,
        exact_grad=_ex4_du,
    )


# ---------------------------------------------------------------------------
# Example 5: Omega = (-1, 1)^2, biactive on x < 0


def _ex5_f(p):
    x = _x(p)
    return np.where(x < 0, 0.0, -12.0 * x**2)


def _ex5_u(p):
    x = _x(p)
    return np.where(x < 0, 0.0, x**4)


def _ex5_du(p):
    x = _x(p)
    return np.stack([np.where(x < 0, 0.0, 4.0 * x**3), np.zeros_like(x)], axis=1)


def example5() -> ProblemSpec:
    return ProblemSpec(
        name="example5",
        domain=Box.rectangle(-1.0, 1.0, -1.0, 1.0),
        source=_ex5_f,
        obstacle=_zero,
        boundary=_ex5_u,
        exact=_ex5_u,
        exact_grad=_ex5_du,
    )


# ---------------------------------------------------------------------------
# Example 6: Omega = (-1, 1)^2, biactive annulus with a nonsmooth multiplier


def _r2(p):
    return _x(p) ** 2 + _y(p) ** 2


def _ex6_u(p):
    r2 = _r2(p)
    return np.where(r2 < 0.25, (1 - 4 * r2) ** 4, 0.0)


def _ex6_du(p):
    r2 = _r2(p)
    c = np.where(r2 < 0.25, -32.0 * (1 - 4 * r2) ** 3, 0.0)
    return np.stack([c * _x(p), c * _y(p)], axis=1)


def _ex6_lap(p):
    r2 = _r2(p)
    return np.where(r2 < 0.25, -64 * (1 - 4 * r2) ** 3 + 768 * r2 * (1 - 4 * r2) ** 2, 0.0)


def _ex6_f(p):
    return -_ex6_lap(p) - np.where(_r2(p) > 0.75, 1.0, 0.0)


def example6() -> ProblemSpec:
    return ProblemSpec(
        name="example6",
        domain=Box.rectangle(-1.0, 1.0, -1.0, 1.0),
        source=_ex6_f,
        obstacle=_zero,
        boundary=_ex6_u,
        exact=_ex6_u,
        exact_grad=_ex6_du,
    )


REGISTRY: dict[str, Callable[[], ProblemSpec]] = {
    "example1": example1,
    "example2": example2,
    "example3": example3,
    "example4": example4,
    "example5": example5,
    "example6": example6,
}


def get_problem(name: str) -> ProblemSpec:
    try:
        return REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(REGISTRY)}") from None


def eval_exact(spec: ProblemSpec, x):
    """Closed-form solution and gradient at ``x``: arrays (N,) and (N, n)."""
    if spec.exact is None:
        raise ValueError(f"{spec.name} has no closed-form solution")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    grad = spec.exact_grad(x) if spec.exact_grad is not None else fd_gradient(spec.exact, x)
    return spec.exact(x), grad
