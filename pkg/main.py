"""
Command-line entry point for synlattice.
Run `python main.py --help` for the list of subcommands.
"""
import argparse
import csv
import sys
from pathlib import Path

import numpy as np

import config
from synlattice.analysis import FIT_MODELS, FitError, create_fit_model
from synlattice.export import write_json
from synlattice.propagate import ConvergenceError
from synlattice.runner import RunSettings, run_scenario
from synlattice.scenarios import apply_overrides, get_scenario, list_scenarios, load_config
from synlattice.spam import SpamModel
from synlattice.utils.logging import setup_logging, get_logger
from synlattice.utils.validation import ValidationError

logger = get_logger("main")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CONVERGENCE = 3
LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=config.OUTPUT_ROOT, help="Output root directory")
    common.add_argument("--tol", type=float, default=config.TOLERANCE, help="Solver tolerance")
    common.add_argument("--workers", type=int, default=config.WORKERS, help="Concurrent sweep points")
    common.add_argument("--set", action="append", default=[], metavar="KEY.PATH=VALUE",
                        help="Override a config value (JSON literal, else string); repeatable")
    common.add_argument("--log-level", default=config.LOG_LEVEL.upper(), choices=LOG_LEVELS)
    common.add_argument("--log-file", type=Path, default=None)

    parser = argparse.ArgumentParser(
        prog="synlattice",
        description="Synthetic-lattice quantum walks, Bloch oscillations and pair dynamics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", parents=[common], help="Run a scenario config file")
    simulate.add_argument("--config", type=Path, required=True)

    fit = sub.add_parser("fit", parents=[common], help="Fit one column of a CSV time series")
    fit.add_argument("--input", type=Path, required=True)
    fit.add_argument("--column", required=True)
    fit.add_argument("--model", choices=FIT_MODELS, required=True)
    fit.add_argument("--window-us", type=float, default=None)
    fit.add_argument("--fixed-amplitude", action="store_true", help="cosine model with b = 1")
    fit.add_argument("--renormalize", choices=["populations", "pair_state"], default=None,
                     help="Undo SPAM contrast with a preset before fitting")

    scan = sub.add_parser("scan", parents=[common], help="Sweep one config parameter over a grid")
    scan.add_argument("--config", type=Path, required=True)
    scan.add_argument("--parameter", default=None, help="Dotted key path, e.g. lattice.tilt_mhz")
    scan.add_argument("--values", type=float, nargs="+", default=None)

    scenario = sub.add_parser("scenario", parents=[common], help="Run a built-in scenario")
    scenario.add_argument("name", nargs="?")
    scenario.add_argument("--list", action="store_true", help="Print the catalog and exit")

    flux = sub.add_parser("calibrate-flux", parents=[common], help="Locate zero flux on a flat ring")
    flux.add_argument("--sites", type=int, default=8)
    flux.add_argument("--rabi", type=float, default=0.9, help="Rabi rate (MHz)")
    flux.add_argument("--wrap-phase", type=float, default=0.0, help="Phase already on the wraparound link (rad)")
    flux.add_argument("--points", type=int, default=32)
    flux.add_argument("--t-probe", type=float, default=None, help="Probe time (us), default 2/rabi")
    return parser


def _settings(args) -> RunSettings:
    table = Path(config.C3_TABLE_PATH) if config.C3_TABLE_PATH else None
    return RunSettings(args.tol, config.MAX_STEPS, args.workers, table)


def _run(cfg, args) -> int:
    outcome = run_scenario(cfg, Path(args.out), _settings(args))
    print("=" * 60)
    print(f"SCENARIO {outcome.name}: {outcome.status}")
    print("=" * 60)
    for key, value in outcome.summary.items():
        print(f"  {key}: {value}")
    print(f"\n✓ {len(outcome.files)} file(s) written to {outcome.out_dir}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    return _run(apply_overrides(load_config(args.config), args.set), args)


def cmd_scan(args) -> int:
    cfg = apply_overrides(load_config(args.config), args.set)
    if args.parameter or args.values:
        if not (args.parameter and args.values):
            raise ValidationError("--parameter and --values must be given together")
        cfg["sweep"] = {"parameter": args.parameter, "values": args.values}
    if "sweep" not in cfg and "analysis" not in cfg:
        raise ValidationError("sweep: the config has no sweep section and no --parameter/--values were given")
    return _run(cfg, args)


def cmd_scenario(args) -> int:
    if args.list:
        for name in list_scenarios():
            print(name)
        return EXIT_OK
    if not args.name:
        raise ValidationError("Scenario name is required (see --list)")
    return _run(apply_overrides(get_scenario(args.name).config, args.set), args)


def cmd_calibrate_flux(args) -> int:
    n = args.sites
    analysis = {
        "kind": "calibrate_flux",
        "sites": list(range(1 - n // 2, n - n // 2 + 1)),
        "rabi_mhz": args.rabi,
        "wrap_phase_rad": args.wrap_phase,
        "n_phases": args.points,
    }
    if args.t_probe is not None:
        analysis["t_probe_us"] = args.t_probe
    return _run(apply_overrides({"name": "calibrate-flux", "analysis": analysis}, args.set), args)


def cmd_fit(args) -> int:
    with open(args.input, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    if not rows or "t_us" not in rows[0] or args.column not in rows[0]:
        raise ValidationError(f"{args.input}: needs columns t_us and {args.column}")
    times = np.array([float(r["t_us"]) for r in rows])
    values = np.array([float(r[args.column]) for r in rows])
    if args.renormalize:
        model = SpamModel.populations() if args.renormalize == "populations" else SpamModel.pair_state()
        values = model.renormalize(values).values
    if args.window_us is not None:
        keep = times <= times[0] + args.window_us
        times, values = times[keep], values[keep]

    result = create_fit_model(args.model, free_amplitude=not args.fixed_amplitude).fit(times, values)
    out = Path(args.out) / f"fit_{args.column}_{args.model}.json"
    write_json(out, {"input": str(args.input), "column": args.column, **result.as_dict()})

    print("=" * 60)
    print(f"FIT {args.model} TO {args.column} ({'converged' if result.converged else 'NOT converged'})")
    print("=" * 60)
    for name, value in result.params.items():
        unit = result.units.get(name, "")
        print(f"  {name} = {value:.6g} ± {result.errors[name]:.2g} {unit}")
    print(f"\n✓ Report saved to {out}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "scan": cmd_scan,
    "scenario": cmd_scenario,
    "calibrate-flux": cmd_calibrate_flux,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(level=args.log_level, log_file=args.log_file)
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, FitError) as e:
        logger.error(f"Invalid input: {e}")
        print(f"\n❌ Invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID
    except ConvergenceError as e:
        logger.error(f"Solver did not converge: {e}", exc_info=True)
        print(f"\n❌ Solver did not converge: {e}", file=sys.stderr)
        print("Partial outputs were kept; try a looser --tol or a larger SYNLAT_MAX_STEPS.", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
