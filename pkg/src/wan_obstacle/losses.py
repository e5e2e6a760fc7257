"""Discrete minmax objectives built from Monte Carlo sums over collocation points.

All functions take network evaluations (:class:`~wan_obstacle.nn.NetEval`)
recorded on a tape together with plain data arrays, and return scalar tape
nodes.  Passing ``tape=None`` evaluates eagerly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .autodiff import Eager, NonFiniteError, Tape, value_of
from .nn import BcWrapper, NetEval, NetworkParams, forward_value_grad, wrap_bc
from .optimizer import AdamState, adamw_step
from .problems import ProblemSpec
from .sampler import CollocationBatch

__all__ = [
    "PenaltyWeights",
    "BatchData",
    "prepare_batch",
    "hat_L",
    "gap_term",
    "obstacle_loss",
    "boundary_loss",
    "network_eval",
    "objective_gen",
    "objective_bc",
    "objective_pen",
    "gap_estimate",
]


@dataclass(frozen=True)
class PenaltyWeights:
    """``w_o1``/``w_o2``: obstacle weights, ``w_b1``/``w_b2``: boundary weights, ``gap``: 1/(2 gamma)."""

    w_o1: float
    w_o2: float
    gap: float
    w_b1: float = 0.0
    w_b2: float = 0.0

    def __post_init__(self):
        for name in ("w_o1", "w_o2", "gap", "w_b1", "w_b2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def gamma(self) -> float:
        return float("inf") if self.gap == 0 else 1.0 / (2.0 * self.gap)

    def check_gamma(self, coercivity: float | None) -> bool:
        """Advisory check of gamma > 1/(2 C_a); warns instead of failing."""
        if coercivity is None or self.gap == 0:
            return True
        ok = self.gamma > 1.0 / (2.0 * coercivity)
        if not ok:
            warnings.warn(
                f"gamma={self.gamma:g} violates gamma > 1/(2 C_a) = {1 / (2 * coercivity):g}", stacklevel=2
            )
        return ok


def _ops(tape):
    return Eager if tape is None else tape


def _sub(ops, a, b):
    return ops.add(a, ops.scale(b, -1.0))


def _sum(ops, terms):
    total = terms[0]
    for t in terms[1:]:
        total = ops.add(total, t)
    return total


def hat_L(u: NetEval, v: NetEval, f_vals, k: float, drift, volume: float, tape=None):
    """(|Omega|/N) sum [grad u.(grad u - grad v) + (b.grad u)(u - v) + k u (u - v) - f (u - v)]."""
    ops = _ops(tape)
    n_pts = value_of(u.u).size
    for arr in (value_of(v.u), np.atleast_2d(f_vals)):
        if arr.size != n_pts:
            raise ValueError(f"hat_L: {arr.size} values for {n_pts} points")
    diff = _sub(ops, u.u, v.u)
    terms = [ops.dot(gu, _sub(ops, gu, gv)) for gu, gv in zip(u.grad, v.grad)]
    drift = tuple(drift) if drift is not None else ()
    if any(b != 0 for b in drift):
        b_grad = _sum(ops, [ops.scale(g, b) for g, b in zip(u.grad, drift) if b != 0])
        terms.append(ops.dot(b_grad, diff))
    if k:
        terms.append(ops.scale(ops.dot(u.u, diff), k))
    terms.append(ops.scale(ops.dot(ops.const(f_vals), diff), -1.0))
    return ops.scale(_sum(ops, terms), volume / n_pts)


def gap_term(u: NetEval, v: NetEval, gap_weight: float, volume: float, tape=None):
    """gap_weight (|Omega|/N) sum [(u - v)^2 + |grad u - grad v|^2]; the caller subtracts it."""
    if gap_weight < 0:
        raise ValueError("gap weight must be nonnegative")
    ops = _ops(tape)
    sq = [ops.square(_sub(ops, u.u, v.u))]
    sq += [ops.square(_sub(ops, gu, gv)) for gu, gv in zip(u.grad, v.grad)]
    return ops.sum_mean(_sum(ops, sq), gap_weight * volume)


def obstacle_loss(u, psi_vals, volume: float, tape=None):
    """(|Omega|/N) sum ((psi - u)^+)^2 for the value node ``u``."""
    ops = _ops(tape)
    viol = ops.positive_part(_sub(ops, ops.const(psi_vals), u))
    return ops.sum_mean(ops.square(viol), volume)


def boundary_loss(u_b, h_vals, perimeter: float, tape=None):
    """(|dOmega|/N_b) sum (u - h)^2 over boundary samples."""
    ops = _ops(tape)
    return ops.sum_mean(ops.square(_sub(ops, u_b, ops.const(h_vals))), perimeter)


# ---------------------------------------------------------------------------
# batch-level objectives


@dataclass
class BatchData:
    """Problem data evaluated once per collocation batch."""

    x: np.ndarray
    xb: np.ndarray
    f: np.ndarray
    psi: np.ndarray
    h_b: np.ndarray
    bc_int: tuple | None
    bc_bnd: tuple | None


def prepare_batch(problem: ProblemSpec, batch: CollocationBatch, bc: BcWrapper | None) -> BatchData:
    x, xb = batch.interior, batch.boundary
    return BatchData(
        x=x,
        xb=xb,
        f=problem.source(x),
        psi=problem.obstacle(x),
        h_b=problem.boundary(xb),
        bc_int=None if bc is None else bc.data(x),
        bc_bnd=None if bc is None else bc.data(xb),
    )


def _lift(ops, ev: NetEval) -> NetEval:
    """Turn a precomputed plain-array evaluation into constant tape nodes."""
    if isinstance(ev.u, np.ndarray) and ops is not Eager:
        return NetEval(ops.const(ev.u), [ops.const(g) for g in ev.grad])
    return ev


def network_eval(params: NetworkParams, x, bc_data, tape=None, trainable=False) -> NetEval:
    out = forward_value_grad(params, x, tape, trainable=trainable)
    return out if bc_data is None else wrap_bc(out, bc_data, tape)


def objective_gen(
    problem: ProblemSpec,
    data: BatchData,
    u: NetworkParams | NetEval,
    v: NetworkParams | NetEval,
    weights: PenaltyWeights,
    tape: Tape | None = None,
    train: str | None = None,
    parts: dict | None = None,
):
    """L_gamma(u, v) + w_o1 L_o(u) + w_b1 L_b(u) - w_o2 L_o(v) - w_b2 L_b(v).

    ``u``/``v`` are parameter sets (evaluated here) or precomputed
    evaluations.  ``train`` names the network whose weights become tape
    parameters (``"u"``, ``"v"`` or ``None``).  If ``parts`` is given, the
    individual terms are stored in it as floats.
    """
    ops = _ops(tape)
    dom = problem.domain
    ue = _lift(ops, u) if isinstance(u, NetEval) else network_eval(u, data.x, data.bc_int, tape, train == "u")
    ve = _lift(ops, v) if isinstance(v, NetEval) else network_eval(v, data.x, data.bc_int, tape, train == "v")

    L = hat_L(ue, ve, data.f, problem.reaction, problem.drift, dom.volume, tape)
    D = gap_term(ue, ve, weights.gap, dom.volume, tape)
    Lo_u = obstacle_loss(ue.u, data.psi, dom.volume, tape)
    Lo_v = obstacle_loss(ve.u, data.psi, dom.volume, tape)
    total = ops.add(_sub(ops, L, D), _sub(ops, ops.scale(Lo_u, weights.w_o1), ops.scale(Lo_v, weights.w_o2)))
    terms = {"hat_L": L, "gap": D, "obstacle_u": Lo_u, "obstacle_v": Lo_v}

    if weights.w_b1 or weights.w_b2:
        ub = network_eval(u, data.xb, data.bc_bnd, tape, train == "u") if weights.w_b1 else None
        vb = network_eval(v, data.xb, data.bc_bnd, tape, train == "v") if weights.w_b2 else None
        if ub is not None:
            Lb_u = boundary_loss(ub.u, data.h_b, dom.perimeter, tape)
            total = ops.add(total, ops.scale(Lb_u, weights.w_b1))
            terms["boundary_u"] = Lb_u
        if vb is not None:
            Lb_v = boundary_loss(vb.u, data.h_b, dom.perimeter, tape)
            total = ops.add(total, ops.scale(Lb_v, -weights.w_b2))
            terms["boundary_v"] = Lb_v
    if parts is not None:
        parts.update({k: float(value_of(t)[0, 0]) for k, t in terms.items()})
    return total


def objective_bc(problem, data, u, v, weights, tape=None, train=None, parts=None):
    """Exact boundary conditions through the cutoff/lift wrapper; only obstacle penalties."""
    if data.bc_int is None:
        raise ValueError("objective_bc needs networks wrapped with a cutoff and lift")
    w = PenaltyWeights(weights.w_o1, weights.w_o2, weights.gap)
    return objective_gen(problem, data, u, v, w, tape, train, parts)


def objective_pen(problem, data, u, v, weights, tape=None, train=None, parts=None):
    """Full penalty objective: boundary and obstacle constraints both penalised."""
    if len(data.xb) == 0:
        raise ValueError("objective_pen needs boundary collocation points")
    return objective_gen(problem, data, u, v, weights, tape, train, parts)


def gap_estimate(
    problem: ProblemSpec,
    u_params: NetworkParams,
    bc: BcWrapper | None,
    weights: PenaltyWeights,
    batch: CollocationBatch,
    steps: int = 2000,
    lr: float = 1e-3,
    test_init: NetworkParams | None = None,
) -> float:
    """Lower bound on the discrete gap function of a frozen solution network.

    Runs ``steps`` AdamW ascent steps on the objective over a test network
    initialised as a copy of the solution network (or ``test_init``) on a
    fixed batch, and returns the largest objective value seen.
    """
    data = prepare_batch(problem, batch, bc)
    ue = network_eval(u_params, data.x, data.bc_int)
    v = (test_init or u_params).copy()
    state = AdamState.zeros(v.theta.size)
    best = -np.inf
    for step in range(steps + 1):
        tape = Tape()
        J = objective_gen(problem, data, ue, v, weights, tape, train="v")
        val = float(J.value[0, 0])
        if not np.isfinite(val):
            raise NonFiniteError(f"gap_estimate: objective {val} at ascent step {step}")
        best = max(best, val)
        if step == steps:
            break
        g = tape.backward(J)
        v.theta = adamw_step(v.theta, -g, state, lr)
    return best
