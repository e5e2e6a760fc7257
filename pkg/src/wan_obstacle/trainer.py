"""Lift pretraining and the alternating gradient descent-ascent loop.

Epoch 0, 2, 4, ... take one AdamW descent step on the solution network and
epochs 1, 3, 5, ... one ascent step on the test network, each on a freshly
drawn collocation batch.  Both branches own their optimizer state and their
cosine-with-warm-restarts schedule, which advances once per step of that
branch.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .autodiff import NonFiniteError, Tape
from .losses import PenaltyWeights, boundary_loss, objective_bc, obstacle_loss, prepare_batch
from .metrics import errors, eval_grid, network_model
from .nn import (
    Architecture,
    BcWrapper,
    NetworkParams,
    build_eta,
    forward_value_grad,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .optimizer import AdamState, LrSchedule, adamw_step, lr_at
from .problems import ProblemSpec, get_problem
from .sampler import StreamKey, draw_batch

log = logging.getLogger(__name__)

__all__ = [
    "TABLE2",
    "TrainConfig",
    "Row",
    "TrainingRecord",
    "WrappedNetwork",
    "LiftResult",
    "needs_lift",
    "pretrain_lift",
    "gda_train",
    "run_experiment",
    "summarize",
    "sweep",
    "write_trajectory",
    "read_trajectory",
    "max_workers",
    "TRAJECTORY_HEADER",
]

# training hyperparameters by spatial dimension
TABLE2 = {
    1: dict(n_interior=1024, n_boundary=2, epochs=12000, lr_soln=0.002, lr_testfn=0.001, w_o1=8000.0, w_o2=1500.0, gap=1e-4),
    2: dict(n_interior=1024, n_boundary=256, epochs=12000, lr_soln=0.003, lr_testfn=0.0047, w_o1=5000.0, w_o2=5000.0, gap=5e-4),
}

TRAJECTORY_HEADER = ["epoch", "error_l2", "error_linfty", "H_one_norm", "objective"]


@dataclass(frozen=True)
class TrainConfig:
    problem: str
    n_interior: int
    n_boundary: int
    epochs: int
    lr_soln: float
    lr_testfn: float
    w_o1: float
    w_o2: float
    gap: float
    width: int = 80
    depth: int = 4
    kind: str = "DRR"
    activation: str = "tanh"
    T_0: int = 2001
    T_mult: int = 2
    seed: int = 0
    metrics_every: int = 50
    eval_nodes: int | None = None
    lift_threshold: float = 1e-4
    lift_epochs: int = 5000
    lift_lr: float = 1e-3

    def __post_init__(self):
        for name in ("n_interior", "n_boundary", "epochs", "width", "depth", "T_0", "T_mult", "metrics_every", "lift_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("lr_soln", "lr_testfn", "w_o1", "w_o2", "gap", "lift_threshold", "lift_lr"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @classmethod
    def for_problem(cls, problem: str, **overrides) -> TrainConfig:
        """Dimension-dependent defaults, then ``overrides``."""
        dim = get_problem(problem).dim
        return cls(problem=problem, **{**TABLE2[dim], **overrides})

    def architecture(self, input_dim: int) -> Architecture:
        """Shared by the solution, test and lift networks."""
        return Architecture(self.kind, self.depth, self.width, input_dim, self.activation)

    @property
    def weights(self) -> PenaltyWeights:
        return PenaltyWeights(self.w_o1, self.w_o2, self.gap)

    @property
    def stem(self) -> str:
        return f"{self.problem}_seed{self.seed}"


class Row(NamedTuple):
    epoch: int
    error_l2: float
    error_linfty: float
    H_one_norm: float
    objective: float


@dataclass
class TrainingRecord:
    problem: str
    seed: int
    epochs: int
    rows: list[Row] = field(default_factory=list)
    checkpoint: str | None = None
    lift_checkpoint: str | None = None
    lift_converged: bool | None = None
    error: str | None = None

    @property
    def final(self) -> Row:
        return self.rows[-1]

    @property
    def failed(self) -> bool:
        return self.error is not None

    def append(self, row: Row) -> None:
        if self.rows and row.epoch <= self.rows[-1].epoch:
            raise ValueError("rows must be strictly increasing in epoch")
        self.rows.append(row)


@dataclass
class WrappedNetwork:
    """A raw network together with its cutoff-and-lift output layer."""

    params: NetworkParams
    bc: BcWrapper

    def __call__(self, x):
        return network_model(self.params, self.bc)(x)


# ---------------------------------------------------------------------------
# lift


@dataclass
class LiftResult:
    params: NetworkParams
    trivial: bool
    converged: bool
    epochs: int
    loss_boundary: float
    loss_obstacle: float


def needs_lift(problem: ProblemSpec, nodes: int = 257) -> bool:
    """True when the boundary data is nonzero or the obstacle is positive somewhere."""
    if not problem.homogeneous:
        return True
    return bool(np.max(problem.obstacle(eval_grid(problem.domain, nodes).points)) > 0.0)


def _zero_output(params: NetworkParams) -> NetworkParams:
    out = params.copy()
    for seg in out.view.segments[-2:]:
        out.theta[seg.offset : seg.offset + seg.size] = 0.0
    return out


def _lift_losses(problem, params, batch, tape):
    dom = problem.domain
    ui = forward_value_grad(params, batch.interior, tape, trainable=True, spatial_grad=False).u
    # the second evaluation registers the same weights again; gradients are summed below
    ub = forward_value_grad(params, batch.boundary, tape, trainable=True, spatial_grad=False).u
    Lb = boundary_loss(ub, problem.boundary(batch.boundary), dom.perimeter, tape)
    Lo = obstacle_loss(ui, problem.obstacle(batch.interior), dom.volume, tape)
    return Lb, Lo


def pretrain_lift(problem: ProblemSpec, arch: Architecture, config: TrainConfig) -> LiftResult:
    """Fit a network to the boundary data and the obstacle: minimise L_b + L_o.

    Stops once both losses are at most ``config.lift_threshold`` on the
    current batch, or after ``config.lift_epochs`` AdamW steps, in which case
    the best iterate is returned and a warning is issued.
    """
    init = init_params(arch, StreamKey(problem.name, config.seed, 0, "init-lift").generator())
    if not needs_lift(problem):
        return LiftResult(_zero_output(init), True, True, 0, 0.0, 0.0)
    params = init
    size = params.theta.size
    state = AdamState.zeros(size)
    best = (math.inf, params.theta.copy(), math.inf, math.inf)
    thr = config.lift_threshold
    for epoch in range(config.lift_epochs + 1):
        key = StreamKey(problem.name, config.seed, epoch, "lift")
        batch = draw_batch(problem.domain, config.n_interior, config.n_boundary, key)
        tape = Tape()
        Lb, Lo = _lift_losses(problem, params, batch, tape)
        total = tape.add(Lb, Lo)
        lb, lo = float(Lb.value[0, 0]), float(Lo.value[0, 0])
        if not math.isfinite(lb + lo):
            raise NonFiniteError(f"lift pretraining: non-finite loss at {key}")
        if lb + lo < best[0]:
            best = (lb + lo, params.theta.copy(), lb, lo)
        if lb <= thr and lo <= thr:
            return LiftResult(params, False, True, epoch, lb, lo)
        if epoch == config.lift_epochs:
            break
        flat = tape.backward(total)
        grad = flat[:size] + flat[size:]
        params.theta = adamw_step(params.theta, grad, state, config.lift_lr)
    _, theta, lb, lo = best
    warnings.warn(
        f"{problem.name}: lift threshold {thr:g} not reached in {config.lift_epochs} epochs "
        f"(L_b={lb:.3e}, L_o={lo:.3e}); using the best iterate",
        stacklevel=2,
    )
    return LiftResult(NetworkParams(arch, theta), False, False, config.lift_epochs, lb, lo)


# ---------------------------------------------------------------------------
# GDA


def gda_train(
    problem: ProblemSpec | str,
    config: TrainConfig,
    lift: LiftResult | None = None,
    out_dir: str | os.PathLike | None = None,
    callback=None,
) -> tuple[WrappedNetwork, TrainingRecord]:
    """Run ``config.epochs + 1`` alternating epochs (0 .. M inclusive).

    A metrics row is appended at epoch 0, every ``metrics_every`` epochs and
    at the last epoch.  With ``out_dir`` the trajectory CSV and checkpoints
    are written there.  ``callback(epoch, branch, u, v)`` runs after every
    update.
    """
    problem = get_problem(problem) if isinstance(problem, str) else problem
    arch = config.architecture(problem.dim)
    if lift is None:
        lift = pretrain_lift(problem, arch, config)
    bc = BcWrapper(build_eta(problem.domain), None if lift.trivial else lift.params)
    u = init_params(arch, StreamKey(problem.name, config.seed, 0, "init-solution").generator())
    v = init_params(arch, StreamKey(problem.name, config.seed, 0, "init-test").generator())
    state_s, state_t = AdamState.zeros(u.theta.size), AdamState.zeros(v.theta.size)
    sched_s = LrSchedule(config.lr_soln, config.T_0, config.T_mult)
    sched_t = LrSchedule(config.lr_testfn, config.T_0, config.T_mult)
    steps = {"u": 0, "v": 0}
    weights = config.weights
    grid = eval_grid(problem.domain, config.eval_nodes)
    record = TrainingRecord(problem.name, config.seed, config.epochs, lift_converged=lift.converged)

    for epoch in range(config.epochs + 1):
        branch = "v" if epoch % 2 else "u"
        key = StreamKey(problem.name, config.seed, epoch, "ascent" if branch == "v" else "descent")
        batch = draw_batch(problem.domain, config.n_interior, config.n_boundary, key)
        data = prepare_batch(problem, batch, bc)
        tape = Tape()
        J = objective_bc(problem, data, u, v, weights, tape, train=branch)
        value = float(J.value[0, 0])
        try:
            if not math.isfinite(value):
                raise NonFiniteError(f"objective {value}")
            g = tape.backward(J)
            if branch == "u":
                u.theta = adamw_step(u.theta, g, state_s, lr_at(sched_s, steps["u"]))
            else:
                v.theta = adamw_step(v.theta, -g, state_t, lr_at(sched_t, steps["v"]))
        except NonFiniteError as exc:
            log.error("non-finite values: epoch %d, seed %d, batch %s", epoch, config.seed, key)
            raise NonFiniteError(f"epoch {epoch}, seed {config.seed}, batch {key}: {exc}") from exc
        steps[branch] += 1
        if callback is not None:
            callback(epoch, branch, u, v)
        if epoch % config.metrics_every == 0 or epoch == config.epochs:
            rep = errors(network_model(u, bc), problem, grid) if problem.has_exact else None
            row = Row(
                epoch,
                rep.l2 if rep else math.nan,
                rep.linf if rep else math.nan,
                rep.h1 if rep else math.nan,
                value,
            )
            record.append(row)
            log.debug("%s seed %d epoch %d: %s", problem.name, config.seed, epoch, row)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory(record, out / f"{config.stem}.csv")
        record.checkpoint = str(out / f"{config.stem}.ckpt")
        save_checkpoint(u, record.checkpoint)
        if not lift.trivial:
            record.lift_checkpoint = str(out / f"{config.stem}_lift.ckpt")
            save_checkpoint(lift.params, record.lift_checkpoint)
        meta = {"config": asdict(config), "lift_converged": lift.converged, "lift_epochs": lift.epochs}
        (out / f"{config.stem}.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return WrappedNetwork(u, bc), record


def load_solution(problem: ProblemSpec, checkpoint, lift_checkpoint=None) -> WrappedNetwork:
    lift = None if lift_checkpoint is None else load_checkpoint(lift_checkpoint)
    return WrappedNetwork(load_checkpoint(checkpoint), BcWrapper(build_eta(problem.domain), lift))


# ---------------------------------------------------------------------------
# CSV


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trajectory(record: TrainingRecord, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for r in record.rows:
            w.writerow([r.epoch, *(_fmt(c) for c in r[1:])])


def read_trajectory(path, problem: str = "", seed: int = -1) -> TrainingRecord:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRAJECTORY_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = [Row(int(r[0]), *(float(c) for c in r[1:])) for r in reader]
    rec = TrainingRecord(problem, seed, rows[-1].epoch if rows else 0)
    for r in rows:
        rec.append(r)
    return rec


# ---------------------------------------------------------------------------
# batches of runs


def max_workers() -> int:
    """Run-level parallelism, capped by ``WAN_OBSTACLE_THREADS`` (default 1)."""
    raw = os.environ.get("WAN_OBSTACLE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"WAN_OBSTACLE_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def _run_one(args) -> TrainingRecord:
    config, out_dir = args
    try:
        _, rec = gda_train(config.problem, config, out_dir=out_dir)
    except Exception as exc:  # a failed run is recorded, not fatal
        log.exception("run %s failed", config.stem)
        rec = TrainingRecord(config.problem, config.seed, config.epochs, error=f"{type(exc).__name__}: {exc}")
    return rec


def _map_runs(configs: list[TrainConfig], out_dir) -> list[TrainingRecord]:
    jobs = [(c, out_dir) for c in configs]
    workers = min(max_workers(), len(jobs))
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def summarize(records: Sequence[TrainingRecord]) -> dict:
    """Percentiles of the final errors over the successful runs."""
    ok = sorted((r for r in records if not r.failed and r.rows), key=lambda r: r.seed)
    out = {"n_runs": len(records), "n_failed": len(records) - len(ok)}
    for col in ("error_l2", "error_linfty", "H_one_norm"):
        vals = np.array([getattr(r.final, col) for r in ok])
        for q in (25, 50, 75):
            out[f"{col}_p{q}"] = float(np.percentile(vals, q)) if len(vals) else math.nan
        out[f"{col}_mean"] = float(np.mean(vals)) if len(vals) else math.nan
    return out


def run_experiment(
    config: TrainConfig, seeds: Sequence[int], out_dir: str | os.PathLike | None = None
) -> tuple[list[TrainingRecord], dict]:
    """Independent runs of ``config`` for each seed plus summary statistics."""
    if not seeds:
        raise ValueError("seed list is empty")
    records = _map_runs([replace(config, seed=int(s)) for s in seeds], out_dir)
    summary = summarize(records)
    if out_dir is not None:
        _write_summary(summary, Path(out_dir) / f"{config.problem}_summary.csv")
    return records, summary


def _write_summary(summary: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["statistic", "error_l2", "error_linfty", "H_one_norm"])
        for stat in ("p25", "p50", "p75", "mean"):
            w.writerow([stat, *(_fmt(summary[f"{c}_{stat}"]) for c in ("error_l2", "error_linfty", "H_one_norm"))])
        w.writerow(["n_runs", summary["n_runs"], "", ""])
        w.writerow(["n_failed", summary["n_failed"], "", ""])


SWEEP_KINDS = ("obstacle-weight", "gap-weight", "network-size")
SWEEP_HEADER = ["kind", "value", "depth", "width", "depth_x_width", "n_runs", "n_failed",
                "mean_error_l2", "mean_error_linfty", "mean_H_one_norm"]


def _sweep_config(kind: str, point, base: TrainConfig) -> TrainConfig:
    if kind == "obstacle-weight":
        return replace(base, w_o1=float(point), w_o2=float(point))
    if kind == "gap-weight":
        return replace(base, gap=float(point))
    if kind == "network-size":
        depth, width = point
        return replace(base, depth=int(depth), width=int(width))
    raise ValueError(f"unknown sweep kind {kind!r}; choose from {SWEEP_KINDS}")


def sweep(
    kind: str,
    grid: Sequence,
    base: TrainConfig,
    seeds: Sequence[int] = (0,),
    out_dir: str | os.PathLike | None = None,
) -> list[dict]:
    """Mean final errors per grid point.

    ``grid`` holds weights for the two weight sweeps and ``(depth, width)``
    pairs for ``network-size``.  Each point's runs go to ``out_dir/<kind>-<i>``.
    """
    if not grid:
        raise ValueError("sweep grid is empty")
    configs = [_sweep_config(kind, p, base) for p in grid]
    jobs, owner = [], []
    for i, c in enumerate(configs):
        for s in seeds:
            jobs.append(replace(c, seed=int(s)))
            owner.append(i)
    if out_dir is None:
        records = _map_runs(jobs, None)
    else:
        # one directory per grid point so that equal seeds do not collide
        records = [None] * len(jobs)
        for i in range(len(configs)):
            idx = [j for j, o in enumerate(owner) if o == i]
            sub = Path(out_dir) / f"{kind}-{i}"
            for j, rec in zip(idx, _map_runs([jobs[j] for j in idx], sub)):
                records[j] = rec
    table = []
    for i, (p, c) in enumerate(zip(grid, configs)):
        summ = summarize([r for r, o in zip(records, owner) if o == i])
        table.append(
            {
                "kind": kind,
                "value": f"{c.depth}x{c.width}" if kind == "network-size" else float(p),
                "depth": c.depth,
                "width": c.width,
                "depth_x_width": c.depth * c.width,
                "n_runs": summ["n_runs"],
                "n_failed": summ["n_failed"],
                "mean_error_l2": summ["error_l2_mean"],
                "mean_error_linfty": summ["error_linfty_mean"],
                "mean_H_one_norm": summ["H_one_norm_mean"],
            }
        )
    if out_dir is not None:
        write_sweep_csv(table, Path(out_dir) / f"sweep_{kind}.csv")
    return table


def write_sweep_csv(table: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for row in table:
            w.writerow([_fmt(row[k]) if isinstance(row[k], float) else row[k] for k in SWEEP_HEADER])
