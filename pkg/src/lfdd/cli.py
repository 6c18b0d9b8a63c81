"""Command-line entry point.

Exit codes: 0 success, 1 check failure, 2 configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import checks, io
from .config import ConfigFileError, build_problem, build_sim_config, load_config
from .dynamics import ConfigError, NumericalError, SlabOperator, run
from .eigensolver import EigenError
from .fields import GridError
from .scenarios import ScenarioError, list_scenarios
from .spectral import analyze
from .tensors import TensorInputError

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

_CONFIG_ERRORS = (ConfigFileError, ConfigError, GridError, ScenarioError, TensorInputError, TypeError)

log = logging.getLogger("lfdd")


def _add_io_args(p):
    p.add_argument("--config", type=Path, help="JSON configuration file")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry by dotted path (repeatable)")


def build_parser():
    parser = argparse.ArgumentParser(prog="lfdd", description="Linearized field dislocation dynamics on a slab")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_io_args(sub.add_parser("simulate", help="integrate the evolution system"))
    _add_io_args(sub.add_parser("eigen", help="limit eigenmodes and Case labels"))
    sub.add_parser("scenarios", help="list the named scenarios")
    chk = sub.add_parser("check", help="run the property and acceptance suite")
    chk.add_argument("--level", choices=("fast", "full"), default="fast")
    chk.add_argument("--inject-fault", choices=("corrupt_b",), default=None, help=argparse.SUPPRESS)
    return parser


def _prepare(args, builder):
    """Validate the configuration and build the model before touching the filesystem."""
    cfg, effective = load_config(args.config, args.overrides)
    return cfg, effective, builder(cfg)


def cmd_simulate(args):
    cfg, effective, sim = _prepare(args, build_sim_config)
    rec = run(sim)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "effective_config.json", effective)
    if args.format == "csv":
        io.write_record_csv(out / "record.csv", rec)
    else:
        io.write_record_json(out / "record.json", rec, {"effective_config": effective})
    if rec.snapshots:
        ops = SlabOperator(sim.grid, sim.material, sim.bc, sim.initial_state.alpha)
        for step, st in rec.snapshots:
            if args.format == "csv":
                io.write_snapshot_csv(out / f"snapshot_{step}.csv", sim.grid, st, ops)
            else:
                io.write_snapshot_json(out / f"snapshot_{step}.json", sim.grid, st, ops, step)
    print(f"E(0)            = {rec.energy[0]:.17g}")
    print(f"E(t_end)        = {rec.energy[-1]:.17g}")
    print(f"E(t_end)/E(0)   = {rec.energy[-1] / rec.energy[0] if rec.energy[0] else float('nan'):.17g}")
    print(f"cum dissipation = {rec.cum_diss[-1]:.17g}")
    print(f"max |V|         = {max(rec.max_residual):.17g}")
    print(f"steps           = {rec.steps[-1]}  t_end = {rec.times[-1]:.17g}")
    return EXIT_OK


def cmd_eigen(args):
    cfg, effective, problem = _prepare(args, build_problem)
    grid, material, bc, alpha = problem
    modes = analyze(grid, material, bc, alpha, tol=cfg.eigen.tol)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "effective_config.json", effective)
    if args.format == "csv":
        io.write_modes_csv(out / "modes.csv", modes)
    else:
        io.write_modes_json(out / "modes.json", modes, {"effective_config": effective})
    summary = modes.summary()
    if modes.repeated_eigenvalue_flag:
        print("warning: repeated eigenvalues; the per-mode limit condition assumes distinct frequencies",
              file=sys.stderr)
    print(" ".join(f"{k}={v}" for k, v in summary.items()))
    return EXIT_OK


def cmd_scenarios(args):
    for name, desc in list_scenarios():
        print(f"{name:<26s}{desc}")
    return EXIT_OK


def cmd_check(args):
    if args.inject_fault:
        with checks.inject_fault(args.inject_fault):
            results = checks.run_suite(args.level)
    else:
        results = checks.run_suite(args.level)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_CHECK if failed else EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "eigen": cmd_eigen, "scenarios": cmd_scenarios, "check": cmd_check}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, EigenError) as exc:
        step = getattr(exc, "step", None)
        where = f" at step {step}" if step is not None else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
