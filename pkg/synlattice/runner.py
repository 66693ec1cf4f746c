"""
Scenario execution: single simulations, built-in analyses and parameter sweeps,
each leaving CSV tables, JSON reports and a manifest in its output directory.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .analysis import (
    SCAN_COLUMNS,
    FitResult,
    NegativeRadicandError,
    calibrate_flux,
    classify_breakdown,
    breakdown_map,
    create_fit_model,
    frequency_vs_interaction_scan,
    gap_approx,
    gap_exact,
    gap_from_eigensolver,
    gaussian_decay_scan,
    pair_hopping_scan,
)
from .export import (
    observable_columns,
    write_correlations,
    write_csv,
    write_json,
    write_manifest,
    write_observables,
    write_records,
    write_trajectory,
)
from .lattice import LatticeSpec, load_c3_table
from .observables import ObservableSeries, observable_series
from .parallel import map_points
from .propagate import DEFAULT_MAX_STEPS, DEFAULT_TOL, ConvergenceError, StateTrajectory, evolve
from .scenarios import (
    build_hamiltonian,
    build_initial_state,
    build_interaction,
    build_lattice,
    build_times,
    set_path,
)
from .spam import SpamModel, apply_to_table
from .utils.logging import get_logger, run_log, timed
from .utils.validation import ValidationError, validate_scenario_config

logger = get_logger("runner")


@dataclass
class RunSettings:
    tol: float = DEFAULT_TOL
    max_steps: int = DEFAULT_MAX_STEPS
    workers: int = 1
    c3_table_path: Optional[Path] = None

    def as_dict(self) -> Dict[str, Any]:
        return {
            "tol": self.tol,
            "max_steps": self.max_steps,
            "workers": self.workers,
            "c3_table_path": str(self.c3_table_path) if self.c3_table_path else None,
        }


@dataclass
class SimulationResult:
    trajectory: StateTrajectory
    series: ObservableSeries
    fits: Dict[str, FitResult] = field(default_factory=dict)
    problems: List[str] = field(default_factory=list)


@dataclass
class RunOutcome:
    name: str
    out_dir: Path
    status: str
    files: List[Path] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def fit_target(series: ObservableSeries, target: str) -> np.ndarray:
    """Look up a fit target (lambda, P00, P_site_j, P_A_j, P_B_j) in an observable series."""
    columns = observable_columns(series)
    if target not in columns:
        raise ValidationError(f"fits: unknown target {target!r}. Available: {', '.join(columns)}")
    return columns[target]


def simulate(config: Dict[str, Any], settings: Optional[RunSettings] = None) -> SimulationResult:
    """Evolve the configured state and collect observables and fits (no files)."""
    settings = settings or RunSettings()
    solver = config.get("solver", {})
    tol = float(solver.get("tol", settings.tol))

    lattice = build_lattice(config["lattice"])
    inter = build_interaction(config, settings.c3_table_path)
    H = build_hamiltonian(config, lattice, inter)
    psi0 = build_initial_state(config, lattice)
    times = build_times(config, H)

    trajectory = evolve(
        H, psi0, times, tol,
        scheme=solver.get("scheme", "midpoint"),
        floquet=solver.get("floquet", True),
        max_steps=settings.max_steps,
    )
    series = observable_series(trajectory, config.get("observables", ()), config.get("correlation_times_us", ()))
    problems = series.check(max(1e-6, 100 * tol))
    for problem in problems:
        logger.warning(f"{config['name']}: {problem}")

    fits = {}
    for spec in config.get("fits", []):
        model = create_fit_model(spec["model"], free_amplitude=spec.get("free_amplitude", True))
        values = fit_target(series, spec["target"])
        keep = times <= times[0] + float(spec.get("window_us", np.inf))
        fits[f"{spec['target']}.{spec['model']}"] = model.fit(times[keep], values[keep])
    return SimulationResult(trajectory, series, fits, problems)


PAIR_STATE_COLUMNS = ("P00",)


def spam_models(spam: Dict[str, Any]) -> Dict[str, SpamModel]:
    """Site-population and pair-state SPAM models; the two presets share the baseline."""
    lower = spam.get("lower", SpamModel.populations().lower)
    return {
        "populations": SpamModel(spam.get("upper", SpamModel.populations().upper), lower),
        "pair_state": SpamModel(spam.get("pair_upper", SpamModel.pair_state().upper), lower),
    }


def _write_simulation(result: SimulationResult, config: Dict[str, Any], out_dir: Path) -> List[Path]:
    files = write_trajectory(out_dir / "trajectory.csv", result.trajectory)
    observables = write_observables(out_dir / "observables.csv", result.series)
    files.append(observables)
    files += write_correlations(out_dir, result.series.correlations)
    if result.fits:
        files.append(write_json(out_dir / "fits.json", {k: f.as_dict() for k, f in result.fits.items()}))
    if "spam" in config:
        models = spam_models(config["spam"])
        bare = out_dir / "observables_bare.csv"
        names = [c for c in observable_columns(result.series) if c.startswith("P")]
        sites = [c for c in names if c not in PAIR_STATE_COLUMNS]
        pairs = [c for c in names if c in PAIR_STATE_COLUMNS]
        source = observables
        for kind, columns in (("populations", sites), ("pair_state", pairs)):
            if columns:
                apply_to_table(models[kind], source, bare, columns, inverse=False)
                source = bare
        if source == bare:
            files.append(bare)
    return files


def _param(analysis: Dict[str, Any], key: str, default: Any = None) -> Any:
    if key in analysis:
        return analysis[key]
    if default is None:
        raise ValidationError(f"analysis.{key}: required key is missing")
    return default


def _gap_grid(analysis, settings, out_dir):
    delta = float(_param(analysis, "delta_mhz"))
    table = load_c3_table(settings.c3_table_path)
    rows = []
    for v in _param(analysis, "v_grid"):
        for rabi in _param(analysis, "rabi_grid"):
            try:
                exact = gap_exact(delta, v, rabi)
            except NegativeRadicandError:
                exact = float("nan")
            approx = gap_approx(delta, v, rabi)
            rows.append({
                "V_mhz": v, "rabi_mhz": rabi, "gap_exact_mhz": exact, "gap_approx_mhz": approx,
                "gap_eigensolver_mhz": gap_from_eigensolver(delta, v, rabi, table),
                "approx_rel_dev": (approx - exact) / exact if exact else float("nan"),
            })
    worst = max(abs(r["gap_exact_mhz"] - r["gap_eigensolver_mhz"]) for r in rows)
    return [write_records(out_dir / "gap_grid.csv", rows)], {"max_exact_vs_eigensolver_mhz": worst}


def _scan_kwargs(analysis, settings):
    kwargs = {"table": load_c3_table(settings.c3_table_path)}
    for key in ("t_final_us", "n_points", "site", "window_us"):
        if key in analysis:
            kwargs[key] = analysis[key]
    if "sites" in analysis:
        kwargs["sites"] = tuple(analysis["sites"])
    return kwargs


def _frequency_scan(analysis, settings, out_dir):
    delta, rabi = float(_param(analysis, "delta_mhz")), float(_param(analysis, "rabi_mhz"))
    rows = frequency_vs_interaction_scan(
        delta, rabi, _param(analysis, "v_grid"), workers=settings.workers, **_scan_kwargs(analysis, settings)
    )
    summary = classify_breakdown(rows, delta, rabi)
    files = [
        write_records(out_dir / "scan.csv", [r.as_dict() for r in rows], SCAN_COLUMNS),
        write_json(out_dir / "breakdown.json", summary.as_dict()),
    ]
    return files, {"contrast": summary.contrast, "failed_points": sum(not r.converged for r in rows)}


def _breakdown_map(analysis, settings, out_dir):
    result = breakdown_map(
        float(_param(analysis, "delta_mhz")), _param(analysis, "rabi_grid"), _param(analysis, "v_grid"),
        workers=settings.workers, **_scan_kwargs(analysis, settings),
    )
    rows = []
    for i, rabi in enumerate(result.rabi_mhz):
        for j, v in enumerate(result.v_mhz):
            rows.append([rabi, v, result.omega_mhz[i, j], result.gamma_per_us[i, j], result.damped[i, j]])
    path = write_csv(out_dir / "breakdown_map.csv", ["rabi_mhz", "V_mhz", "omega_mhz", "gamma_per_us", "damped"], rows)
    return [path], {"damped_points": int(np.sum(result.damped))}


def _gaussian_decay_scan(analysis, settings, out_dir):
    kwargs = {k: analysis[k] for k in ("delta_mhz", "rabi_mhz", "t_final_us", "threshold") if k in analysis}
    if "sites" in analysis:
        kwargs["sites"] = tuple(analysis["sites"])
    result = gaussian_decay_scan(
        _param(analysis, "v_grid"), tol=settings.tol, table=load_c3_table(settings.c3_table_path),
        workers=settings.workers, **kwargs,
    )
    files = [
        write_records(out_dir / "decay_scan.csv", [r.as_dict() for r in result.rows]),
        write_json(out_dir / "decay_scan.json", result.as_dict()),
    ]
    exponent = result.exponent.exponent if result.exponent else None
    return files, {"beta_exponent": exponent}


def _pair_hopping_scan(analysis, settings, out_dir):
    kwargs = {k: analysis[k] for k in ("delta_mhz", "rabi_mhz", "cycles") if k in analysis}
    if "sites" in analysis:
        kwargs["sites"] = tuple(analysis["sites"])
    rows = pair_hopping_scan(
        _param(analysis, "v_grid"), tol=settings.tol, table=load_c3_table(settings.c3_table_path),
        workers=settings.workers, **kwargs,
    )
    records = [r.as_dict() for r in rows]
    deviations = [abs(r.deviation) for r in rows if np.isfinite(r.deviation)]
    return [write_records(out_dir / "pair_hopping.csv", records)], {
        "max_abs_deviation": max(deviations) if deviations else None,
    }


def _calibrate_flux(analysis, settings, out_dir):
    sites = _param(analysis, "sites", list(range(-3, 5)))
    ring = LatticeSpec.ring(sites, float(_param(analysis, "rabi_mhz")), 0.0,
                            float(analysis.get("wrap_phase_rad", 0.0)), escher=False)
    calibration = calibrate_flux(
        ring, analysis.get("t_probe_us"), int(analysis.get("n_phases", 32)),
        int(analysis.get("start_site", 0)), analysis.get("probe_site"), settings.tol, settings.workers,
    )
    files = [
        write_csv(out_dir / "flux_sweep.csv", ["phase_rad", "probe_population"],
                  zip(calibration.phases, calibration.populations)),
        write_json(out_dir / "flux_calibration.json", calibration.as_dict()),
    ]
    return files, {"flux_offset_rad": calibration.flux_offset, "uncertainty_rad": calibration.uncertainty}


ANALYSES: Dict[str, Callable] = {
    "gap_grid": _gap_grid,
    "frequency_scan": _frequency_scan,
    "breakdown_map": _breakdown_map,
    "gaussian_decay_scan": _gaussian_decay_scan,
    "pair_hopping_scan": _pair_hopping_scan,
    "calibrate_flux": _calibrate_flux,
}


@dataclass
class SweepTable:
    parameter: str
    rows: List[Dict[str, Any]]

    @property
    def columns(self) -> List[str]:
        columns = [self.parameter]
        for row in self.rows:
            columns += [k for k in row if k not in columns]
        return columns

    @property
    def failed(self) -> int:
        return sum(1 for r in self.rows if r.get("error"))


def sweep(
    config: Dict[str, Any],
    parameter: str,
    values: Sequence[Any],
    settings: Optional[RunSettings] = None,
    out_dir: Optional[Path] = None,
) -> SweepTable:
    """
    Rerun a simulation config with one key path set to each value in turn.

    Points run concurrently; a failing point is recorded in its row's error
    column and does not stop the sweep. With out_dir, each point's outputs
    go to point_NNN/.
    """
    settings = settings or RunSettings()
    base = {k: v for k, v in config.items() if k != "sweep"}

    def run_point(item):
        k, value = item
        point_config = set_path(copy.deepcopy(base), parameter, value)
        validate_scenario_config(point_config)
        result = simulate(point_config, RunSettings(settings.tol, settings.max_steps, 1, settings.c3_table_path))
        if out_dir is not None:
            _write_simulation(result, point_config, Path(out_dir) / f"point_{k:03d}")
        return result

    rows = []
    outcomes = map_points(run_point, list(enumerate(values)), settings.workers, f"{parameter} point")
    for outcome in outcomes:
        k, value = outcome.point
        row: Dict[str, Any] = {parameter: value}
        if outcome.ok:
            for key, fit in outcome.value.fits.items():
                for name, param in fit.params.items():
                    row[f"{key}.{name}"] = param
                    row[f"{key}.{name}_err"] = fit.errors[name]
                row[f"{key}.converged"] = fit.converged
            row["error"] = ""
        else:
            row["error"] = outcome.error
        rows.append(row)
    table = SweepTable(parameter, rows)
    logger.info(f"Sweep over {parameter}: {len(rows) - table.failed} of {len(rows)} point(s) succeeded")
    return table


def run_scenario(
    config: Dict[str, Any],
    out_root: Path,
    settings: Optional[RunSettings] = None,
) -> RunOutcome:
    """
    Validate and run a scenario, writing its outputs and manifest to out_root/<name>.

    A ConvergenceError is re-raised after the manifest records the failure;
    files already written stay in place.
    """
    settings = settings or RunSettings()
    validate_scenario_config(config)
    name = config["name"]
    out_dir = Path(out_root) / name
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info(f"Running scenario {name} -> {out_dir}")

    outcome = RunOutcome(name, out_dir, "running")
    manifest = {
        "name": name,
        "synlattice_version": __version__,
        "settings": settings.as_dict(),
        "config": config,
    }
    with run_log(out_dir) as log_path:
        outcome.files.append(log_path)
        try:
            if "analysis" in config:
                kind = config["analysis"]["kind"]
                with timed(logger, f"Analysis {kind}"):
                    files, summary = ANALYSES[kind](config["analysis"], settings, out_dir)
                outcome.files += files
                outcome.summary.update(summary)
            elif "sweep" in config:
                table = sweep(config, config["sweep"]["parameter"], config["sweep"]["values"], settings, out_dir)
                outcome.files.append(write_records(out_dir / "sweep.csv", table.rows, table.columns))
                outcome.summary["failed_points"] = table.failed
            else:
                with timed(logger, f"Simulation {name}"):
                    result = simulate(config, settings)
                outcome.files += _write_simulation(result, config, out_dir)
                manifest["provenance"] = result.trajectory.provenance
                outcome.summary["invariant_problems"] = result.problems
                outcome.summary["fits_converged"] = {k: f.converged for k, f in result.fits.items()}
            outcome.status = "ok"
        except ConvergenceError as e:
            outcome.status = f"failed: {e}"
            logger.error(f"Scenario {name} did not converge: {e}")
            raise
        except Exception as e:
            outcome.status = f"failed: {type(e).__name__}: {e}"
            raise
        finally:
            manifest["status"] = outcome.status
            manifest["summary"] = outcome.summary
            manifest["files"] = sorted(str(p.relative_to(out_dir)) for p in outcome.files)
            outcome.files.append(write_manifest(out_dir, manifest))
    logger.info(f"Scenario {name} finished: {len(outcome.files)} file(s) written")
    return outcome
