"""Long training experiments behind the reproduction criteria, cached under results/.

Every run writes its trajectory, checkpoints and a JSON copy of its config.
A run is skipped when its JSON matches the requested config and its
trajectory reaches the final epoch, so the script can be interrupted and
restarted.  Gap estimates and complementarity reports are cached the same way
in ``results/derived.json``.

    python3 scripts/run_acceptance.py            # everything, in order
    python3 scripts/run_acceptance.py example1   # one group
"""

from __future__ import annotations

import argparse
import json
import logging
import time
from dataclasses import asdict, replace
from pathlib import Path

from wan_obstacle.losses import gap_estimate
from wan_obstacle.metrics import complementarity_report, write_percentile_csv, boxplot_data
from wan_obstacle.problems import get_problem
from wan_obstacle.sampler import StreamKey, draw_batch
from wan_obstacle.trainer import (
    TrainConfig,
    gda_train,
    load_solution,
    read_trajectory,
    summarize,
    write_sweep_csv,
)

ROOT = Path(__file__).resolve().parent.parent / "results"
GAP_WEIGHTS = (1e-5, 1e-4, 5e-4, 1e-3, 1e-2, 1e-1)
GAP_STEPS = 500
# 2D runs are shortened to bound runtime; 2D metrics are evaluated less often
EPOCHS_2D = 6000
METRICS_EVERY_2D = 200

log = logging.getLogger("acceptance")


def _cfg(problem, **kw):
    if get_problem(problem).dim == 2:
        kw = {"epochs": EPOCHS_2D, "metrics_every": METRICS_EVERY_2D, **kw}
    return TrainConfig.for_problem(problem, **kw)


# group name -> (output directory, configs)
def groups() -> dict[str, tuple[Path, list[TrainConfig]]]:
    out = {
        "example1": (ROOT / "example1", [_cfg("example1", seed=s) for s in range(10)]),
        "example2": (ROOT / "example2", [_cfg("example2", seed=s) for s in range(5)]),
        "example5": (ROOT / "example5", [_cfg("example5", seed=s) for s in range(5)]),
        "example4": (ROOT / "example4", [_cfg("example4", seed=s) for s in range(10)]),
    }
    for i, g in enumerate(GAP_WEIGHTS):
        out[f"example6-gap{i}"] = (ROOT / "example6_gap" / f"gap-weight-{i}", [_cfg("example6", gap=g, seed=s) for s in range(3)])
    return out


def is_done(config: TrainConfig, out_dir: Path) -> bool:
    meta, traj = out_dir / f"{config.stem}.json", out_dir / f"{config.stem}.csv"
    if not (meta.exists() and traj.exists()):
        return False
    if json.loads(meta.read_text())["config"] != json.loads(json.dumps(asdict(config))):
        return False
    rows = read_trajectory(traj).rows
    return bool(rows) and rows[-1].epoch == config.epochs


def ensure_runs(name: str):
    """Train whatever is missing in group ``name``; return the trajectories."""
    out_dir, configs = groups()[name]
    records = []
    for c in configs:
        if not is_done(c, out_dir):
            t0 = time.perf_counter()
            gda_train(c.problem, c, out_dir=out_dir)
            log.info("%s/%s trained in %.0f s", name, c.stem, time.perf_counter() - t0)
        records.append(read_trajectory(out_dir / f"{c.stem}.csv", c.problem, c.seed))
    return records


def _derived_cache() -> dict:
    path = ROOT / "derived.json"
    return json.loads(path.read_text()) if path.exists() else {}


def _store(cache: dict):
    ROOT.mkdir(parents=True, exist_ok=True)
    (ROOT / "derived.json").write_text(json.dumps(cache, indent=1, sort_keys=True) + "\n")


def _load(config: TrainConfig, out_dir: Path):
    problem = get_problem(config.problem)
    lift = out_dir / f"{config.stem}_lift.ckpt"
    return problem, load_solution(problem, out_dir / f"{config.stem}.ckpt", lift if lift.exists() else None)


def ensure_gaps(name: str) -> dict[str, float]:
    """Gap estimate of every trained solution in group ``name``."""
    ensure_runs(name)
    out_dir, configs = groups()[name]
    cache = _derived_cache()
    result = {}
    for c in configs:
        key = f"gap/{out_dir.relative_to(ROOT)}/{c.stem}/{GAP_STEPS}"
        if key not in cache:
            problem, net = _load(c, out_dir)
            batch = draw_batch(problem.domain, c.n_interior, c.n_boundary, StreamKey(problem.name, c.seed, 0, "gap"))
            cache[key] = gap_estimate(problem, net.params, net.bc, c.weights, batch, steps=GAP_STEPS)
            _store(cache)
        result[c.stem] = cache[key]
    return result


def ensure_complementarity(name: str, nodes: int = 257) -> dict[str, dict]:
    ensure_runs(name)
    out_dir, configs = groups()[name]
    cache = _derived_cache()
    result = {}
    for c in configs:
        key = f"complementarity/{out_dir.relative_to(ROOT)}/{c.stem}/{nodes}"
        if key not in cache:
            problem, net = _load(c, out_dir)
            cache[key] = asdict(complementarity_report(net, problem, nodes))
            _store(cache)
        result[c.stem] = cache[key]
    return result


def gap_sweep_table() -> list[dict]:
    table = []
    for i, g in enumerate(GAP_WEIGHTS):
        summ = summarize(ensure_runs(f"example6-gap{i}"))
        table.append(
            {
                "kind": "gap-weight",
                "value": g,
                "depth": 4,
                "width": 80,
                "depth_x_width": 320,
                "n_runs": summ["n_runs"],
                "n_failed": summ["n_failed"],
                "mean_error_l2": summ["error_l2_mean"],
                "mean_error_linfty": summ["error_linfty_mean"],
                "mean_H_one_norm": summ["H_one_norm_mean"],
            }
        )
    write_sweep_csv(table, ROOT / "example6_gap" / "sweep_gap-weight.csv")
    return table


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("groups", nargs="*", help="subset of groups (default: all)")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    names = args.groups or list(groups())
    for name in names:
        records = ensure_runs(name)
        if len(records) >= 2:
            write_percentile_csv(boxplot_data(records), groups()[name][0] / f"{records[0].problem}_percentiles.csv")
        log.info("%s: %s", name, {k: round(v, 5) for k, v in summarize(records).items()})
    if not args.groups:
        for name in ("example1", "example2", "example5", "example4"):
            log.info("gap %s: min %.3g", name, min(ensure_gaps(name).values()))
        ensure_complementarity("example5")
        gap_sweep_table()


if __name__ == "__main__":
    main()
