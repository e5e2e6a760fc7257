"""Command-line front end.

Subcommands: ``run``, ``seeds``, ``sweep``, ``oracle``, ``gap``, ``diagnose``.
Every subcommand writes CSV files into ``--out``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from .losses import PenaltyWeights, gap_estimate
from .metrics import boxplot_data, complementarity_report, write_percentile_csv
from .oracle import pgs_solve_2d, psor_solve_1d, write_csv
from .problems import REGISTRY, get_problem
from .sampler import StreamKey, draw_batch
from .trainer import SWEEP_KINDS, TrainConfig, gda_train, load_solution, run_experiment, sweep, write_trajectory

log = logging.getLogger("wan_obstacle")

__all__ = ["ConfigError", "parse_config", "parse_seeds", "main"]


class ConfigError(ValueError):
    pass


# config key -> TrainConfig field, per section
CONFIG_KEYS = {
    "network": {"width": "width", "depth": "depth", "activation": "activation", "architecture": "kind"},
    "training": {
        "n_interior": "n_interior",
        "n_boundary": "n_boundary",
        "Epochs": "epochs",
        "lr_soln": "lr_soln",
        "lr_testfn": "lr_testfn",
        "T_0": "T_0",
        "T_mult": "T_mult",
        "seed": "seed",
        "metrics_every": "metrics_every",
    },
    "weights": {"weight_soln_obs": "w_o1", "weight_testfn_obs": "w_o2", "weight_gap_term": "gap"},
    "problem": {"name": "problem"},
}

_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _convert(field_name: str, raw: str, where: str):
    kind = _FIELD_TYPES[field_name]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from None
    return raw.strip()


def parse_config(path=None, problem: str | None = None) -> TrainConfig:
    """Read an INI-style config; missing keys take the defaults for the problem's dimension.

    ``problem`` (e.g. from ``--problem``) takes precedence over ``[problem] name``.
    """
    parser = configparser.ConfigParser(interpolation=None, strict=True, empty_lines_in_values=False)
    parser.optionxform = str  # keys are case sensitive (Epochs, T_0)
    if path is not None:
        text = Path(path).read_text()
        try:
            parser.read_string(text, source=str(path))
        except configparser.DuplicateOptionError as exc:
            raise ConfigError(f"{path}, line {exc.lineno}: duplicate key {exc.option!r} in [{exc.section}]") from None
        except configparser.DuplicateSectionError as exc:
            raise ConfigError(f"{path}, line {exc.lineno}: duplicate section [{exc.section}]") from None
        except configparser.MissingSectionHeaderError as exc:
            raise ConfigError(f"{path}, line {exc.lineno}: key outside of a section: {exc.line.strip()!r}") from None
        except configparser.ParsingError as exc:
            lineno, line = exc.errors[0]
            raise ConfigError(f"{path}, line {lineno}: malformed line {line.strip()!r}") from None
    values = {}
    for section in parser.sections():
        if section not in CONFIG_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in CONFIG_KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            name = CONFIG_KEYS[section][key]
            values[name] = _convert(name, raw, f"[{section}] {key}")
    name = problem or values.pop("problem", None)
    values.pop("problem", None)
    if name is None:
        raise ConfigError("no problem given (use --problem or [problem] name)")
    if name not in REGISTRY:
        raise ConfigError(f"unknown problem {name!r}; choose from {sorted(REGISTRY)}")
    try:
        return TrainConfig.for_problem(name, **values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_seeds(text: str) -> list[int]:
    """``"0..9"`` (inclusive range), ``"1,4,7"`` or a mix such as ``"0..2,10"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    return seeds


def _grid_values(text: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "x" in part:
            d, w = part.split("x")
            out.append((int(d), int(w)))
        else:
            out.append(float(part))
    return out


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wan-obstacle", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seeds=False):
        sp.add_argument("--problem", required=True, choices=sorted(REGISTRY))
        sp.add_argument("--config", help="INI file with [network], [training], [weights], [problem]")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--epochs", type=int, help="override the number of epochs")
        if seeds:
            sp.add_argument("--seeds", default="0", help='e.g. "0..9" or "1,3,5"')
        else:
            sp.add_argument("--seed", type=int, default=None)

    common(sub.add_parser("run", help="one training run"))
    common(sub.add_parser("seeds", help="training runs over a seed list"), seeds=True)
    sw = sub.add_parser("sweep", help="obstacle-weight, gap-weight or network-size sweep")
    common(sw, seeds=True)
    sw.add_argument("--kind", required=True, choices=SWEEP_KINDS)
    sw.add_argument("--grid", required=True, help='comma separated weights, or "DxW" pairs for network-size')

    orc = sub.add_parser("oracle", help="finite-difference reference solution")
    orc.add_argument("--problem", required=True, choices=sorted(REGISTRY))
    orc.add_argument("--grid", type=int, default=None, help="interior nodes (1D) or nodes per axis (2D)")
    orc.add_argument("--omega", type=float, default=None)
    orc.add_argument("--tol", type=float, default=1e-10)
    orc.add_argument("--out", default="out")

    for name, helptext in (("gap", "gap estimate of a checkpoint"), ("diagnose", "complementarity report of a checkpoint")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sp.add_argument("--checkpoint", required=True)
        sp.add_argument("--lift", help="lift checkpoint, if the run used one")
        if name == "gap":
            sp.add_argument("--steps", type=int, default=2000)
        else:
            sp.add_argument("--grid", type=int, default=257)
    return p


def _config(args) -> TrainConfig:
    cfg = parse_config(args.config, args.problem)
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _cmd_run(args, out: Path):
    cfg = _config(args)
    _, rec = gda_train(cfg.problem, cfg, out_dir=out)
    print(f"{out / (cfg.stem + '.csv')}: final L2 {rec.final.error_l2:.4g}, Linf {rec.final.error_linfty:.4g}")
    return 0


def _cmd_seeds(args, out: Path):
    cfg = _config(args)
    records, summary = run_experiment(cfg, parse_seeds(args.seeds), out)
    ok = [r for r in records if not r.failed]
    if len(ok) >= 2:
        write_percentile_csv(boxplot_data(ok), out / f"{cfg.problem}_percentiles.csv")
    print(f"{len(ok)}/{len(records)} runs succeeded; median final L2 {summary['error_l2_p50']:.4g}")
    return 0 if len(ok) == len(records) else 1


def _cmd_sweep(args, out: Path):
    cfg = _config(args)
    table = sweep(args.kind, _grid_values(args.grid), cfg, parse_seeds(args.seeds), out)
    failed = sum(r["n_failed"] for r in table)
    print(f"{out / f'sweep_{args.kind}.csv'}: {len(table)} grid points, {failed} failed runs")
    return 0 if failed == 0 else 1


def _cmd_oracle(args, out: Path):
    problem = get_problem(args.problem)
    if problem.dim == 1:
        sol = psor_solve_1d(problem, args.grid or 2048, args.omega, args.tol)
    else:
        sol = pgs_solve_2d(problem, args.grid or 257, omega=args.omega, tol=args.tol)
    path = out / f"oracle_{problem.name}_{args.grid or 'default'}.csv"
    write_csv(sol, path)
    print(f"{path}: {sol.iterations} sweeps, converged={sol.converged}")
    return 0 if sol.converged else 1


def _cmd_gap(args, out: Path):
    cfg = _config(args)
    problem = get_problem(cfg.problem)
    net = load_solution(problem, args.checkpoint, args.lift)
    batch = draw_batch(problem.domain, cfg.n_interior, cfg.n_boundary, StreamKey(problem.name, cfg.seed, 0, "gap"))
    weights = PenaltyWeights(cfg.w_o1, cfg.w_o2, cfg.gap)
    value = gap_estimate(problem, net.params, net.bc, weights, batch, steps=args.steps)
    _write_rows(out / f"gap_{problem.name}.csv", ["checkpoint", "gap_estimate"], [[Path(args.checkpoint).name, repr(value)]])
    print(f"gap estimate {value:.6g}")
    return 0


def _cmd_diagnose(args, out: Path):
    problem = get_problem(args.problem)
    net = load_solution(problem, args.checkpoint, args.lift)
    rep = complementarity_report(net, problem, args.grid)
    _write_rows(
        out / f"diagnose_{problem.name}.csv",
        ["negativity", "residual", "product", "h_grid"],
        [[repr(rep.negativity), repr(rep.residual), repr(rep.product), repr(rep.h_grid)]],
    )
    print(rep)
    return 0


COMMANDS = {
    "run": _cmd_run,
    "seeds": _cmd_seeds,
    "sweep": _cmd_sweep,
    "oracle": _cmd_oracle,
    "gap": _cmd_gap,
    "diagnose": _cmd_diagnose,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](args, out)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
