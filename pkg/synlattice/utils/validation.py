"""Input validation utilities for synlattice scenario configurations."""
from numbers import Number
from typing import Any, Dict, List, Optional


class ValidationError(Exception):
    """Invalid lattice, interaction, state or scenario input."""
    pass


VALID_BOUNDARIES = ["open", "periodic"]
VALID_DRIVES = ["static", "bichromatic", "escher"]
VALID_SCHEMES = ["midpoint", "magnus4"]
VALID_STATE_KINDS = ["site", "pair"]
VALID_FIT_MODELS = ["bloch_oscillation", "damped_sine", "gaussian_decay", "cosine"]
VALID_ANALYSES = [
    "gap_grid",
    "breakdown_map",
    "frequency_scan",
    "gaussian_decay_scan",
    "pair_hopping_scan",
    "calibrate_flux",
]


def _require(config: dict, key: str, path: str) -> Any:
    if key not in config:
        raise ValidationError(f"{path}{key}: required key is missing")
    return config[key]


def _number(value: Any, path: str, minimum: Optional[float] = None, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, Number):
        raise ValidationError(f"{path}: expected a number, got {value!r}")
    value = float(value)
    if value != value or value in (float("inf"), float("-inf")):
        raise ValidationError(f"{path}: must be finite")
    if positive and value <= 0:
        raise ValidationError(f"{path}: must be positive, got {value}")
    if minimum is not None and value < minimum:
        raise ValidationError(f"{path}: must be >= {minimum}, got {value}")
    return value


def _integer(value: Any, path: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{path}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationError(f"{path}: must be >= {minimum}, got {value}")
    return value


def _number_list(value: Any, path: str, min_length: int = 1) -> List[float]:
    if not isinstance(value, list) or len(value) < min_length:
        raise ValidationError(f"{path}: expected a list of at least {min_length} number(s)")
    return [_number(v, f"{path}[{k}]") for k, v in enumerate(value)]


def _choice(value: Any, valid: List[str], path: str) -> str:
    if value not in valid:
        raise ValidationError(f"{path}: invalid value {value!r}. Valid: {', '.join(valid)}")
    return value


def validate_lattice_config(lattice: Any, path: str = "lattice") -> bool:
    """
    Validate the lattice section of a scenario.

    Args:
        lattice: The lattice dictionary
        path: Key path used in error messages

    Returns:
        True if valid

    Raises:
        ValidationError: If validation fails, naming the offending key path
    """
    if not isinstance(lattice, dict):
        raise ValidationError(f"{path}: expected an object")
    sites = _require(lattice, "sites", f"{path}.")
    if not isinstance(sites, list) or len(sites) < 2:
        raise ValidationError(f"{path}.sites: expected a list of at least two site labels")
    sites = [_integer(s, f"{path}.sites[{k}]") for k, s in enumerate(sites)]
    if any(b - a != 1 for a, b in zip(sites, sites[1:])):
        raise ValidationError(f"{path}.sites: labels must be consecutive integers")

    boundary = _choice(lattice.get("boundary", "open"), VALID_BOUNDARIES, f"{path}.boundary")

    if "links" in lattice:
        links = lattice["links"]
        if not isinstance(links, list):
            raise ValidationError(f"{path}.links: expected a list")
        for k, link in enumerate(links):
            link_path = f"{path}.links[{k}]"
            if not isinstance(link, dict):
                raise ValidationError(f"{link_path}: expected an object")
            source = _integer(_require(link, "from", f"{link_path}."), f"{link_path}.from")
            target = _integer(_require(link, "to", f"{link_path}."), f"{link_path}.to")
            _number(_require(link, "rabi_mhz", f"{link_path}."), f"{link_path}.rabi_mhz", minimum=0.0)
            _number(link.get("phase_rad", 0.0), f"{link_path}.phase_rad")
            wrap = (source, target) == (sites[-1], sites[0])
            if not (target - source == 1 and source in sites and target in sites) and not wrap:
                raise ValidationError(f"{link_path}: link {source}->{target} does not join adjacent sites")
    elif "rabi_mhz" in lattice:
        _number(lattice["rabi_mhz"], f"{path}.rabi_mhz", minimum=0.0)
    else:
        raise ValidationError(f"{path}: one of 'links' or 'rabi_mhz' is required")

    if "detunings" in lattice:
        detunings = _number_list(lattice["detunings"], f"{path}.detunings")
        if len(detunings) != len(sites):
            raise ValidationError(f"{path}.detunings: expected {len(sites)} values, got {len(detunings)}")
    elif "tilt_mhz" in lattice:
        _number(lattice["tilt_mhz"], f"{path}.tilt_mhz")

    if "wrap_phase_rad" in lattice:
        _number(lattice["wrap_phase_rad"], f"{path}.wrap_phase_rad")
        if boundary != "periodic":
            raise ValidationError(f"{path}.wrap_phase_rad: only a periodic lattice has a wraparound link")

    drive = lattice.get("drive", {"type": "static"})
    if not isinstance(drive, dict):
        raise ValidationError(f"{path}.drive: expected an object")
    kind = _choice(drive.get("type", "static"), VALID_DRIVES, f"{path}.drive.type")
    if kind != "static":
        _number(_require(drive, "detuning_mhz", f"{path}.drive."), f"{path}.drive.detuning_mhz")
    if kind == "escher" and boundary != "periodic":
        raise ValidationError(f"{path}.drive.type: escher drive requires boundary 'periodic'")
    return True


def validate_interaction_config(interaction: Any, path: str = "interaction") -> bool:
    if not isinstance(interaction, dict):
        raise ValidationError(f"{path}: expected an object")
    if "v_mhz" in interaction:
        _number(interaction["v_mhz"], f"{path}.v_mhz")
    elif "separation_um" in interaction:
        _number(interaction["separation_um"], f"{path}.separation_um", positive=True)
    else:
        raise ValidationError(f"{path}: one of 'v_mhz' or 'separation_um' is required")
    if "c3_table_path" in interaction and not isinstance(interaction["c3_table_path"], str):
        raise ValidationError(f"{path}.c3_table_path: expected a string")
    return True


def _validate_time(time: Any, path: str = "time"):
    if not isinstance(time, dict):
        raise ValidationError(f"{path}: expected an object")
    if "grid_us" in time:
        grid = _number_list(time["grid_us"], f"{path}.grid_us", min_length=1)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValidationError(f"{path}.grid_us: times must be strictly increasing")
    else:
        _number(_require(time, "t_final_us", f"{path}."), f"{path}.t_final_us", positive=True)
        _integer(time.get("n_points", 201), f"{path}.n_points", minimum=2)


def _validate_initial_state(state: Any, config: dict, path: str = "initial_state"):
    if not isinstance(state, dict):
        raise ValidationError(f"{path}: expected an object")
    kind = _choice(state.get("kind", "site"), VALID_STATE_KINDS, f"{path}.kind")
    sites = config["lattice"]["sites"]
    if kind == "site":
        site = _integer(state.get("site", 0), f"{path}.site")
        if site not in sites:
            raise ValidationError(f"{path}.site: {site} is not a lattice site")
    else:
        if "interaction" not in config:
            raise ValidationError(f"{path}.kind: a pair state needs an 'interaction' section")
        pair = state.get("sites", [0, 0])
        if not isinstance(pair, list) or len(pair) != 2:
            raise ValidationError(f"{path}.sites: expected two site labels")
        for k, s in enumerate(pair):
            if _integer(s, f"{path}.sites[{k}]") not in sites:
                raise ValidationError(f"{path}.sites[{k}]: {s} is not a lattice site")


def _validate_fits(fits: Any, path: str = "fits"):
    if not isinstance(fits, list):
        raise ValidationError(f"{path}: expected a list")
    for k, fit in enumerate(fits):
        fit_path = f"{path}[{k}]"
        if not isinstance(fit, dict):
            raise ValidationError(f"{fit_path}: expected an object")
        _choice(_require(fit, "model", f"{fit_path}."), VALID_FIT_MODELS, f"{fit_path}.model")
        target = _require(fit, "target", f"{fit_path}.")
        if not isinstance(target, str) or not target:
            raise ValidationError(f"{fit_path}.target: expected an observable name")


def validate_scenario_config(config: Any) -> Dict[str, Any]:
    """
    Validate a scenario configuration loaded from JSON.

    Args:
        config: Scenario dictionary

    Returns:
        The same dictionary, for chaining

    Raises:
        ValidationError: If validation fails; the message starts with the key path
    """
    if not isinstance(config, dict):
        raise ValidationError("Scenario config must be a JSON object")
    name = _require(config, "name", "")
    if not isinstance(name, str) or not name.strip():
        raise ValidationError("name: must be a non-empty string")

    if "analysis" in config:
        analysis = config["analysis"]
        if not isinstance(analysis, dict):
            raise ValidationError("analysis: expected an object")
        _choice(_require(analysis, "kind", "analysis."), VALID_ANALYSES, "analysis.kind")
        if "lattice" in config:
            validate_lattice_config(config["lattice"])
        return config

    validate_lattice_config(_require(config, "lattice", ""))
    if "interaction" in config:
        validate_interaction_config(config["interaction"])
    if "lab_frame" in config:
        lab = config["lab_frame"]
        if not isinstance(lab, dict):
            raise ValidationError("lab_frame: expected an object")
        energies = _number_list(_require(lab, "bare_energies_mhz", "lab_frame."), "lab_frame.bare_energies_mhz", 2)
        if len(energies) != len(config["lattice"]["sites"]):
            raise ValidationError("lab_frame.bare_energies_mhz: expected one energy per site")
    _validate_initial_state(config.get("initial_state", {"kind": "site", "site": 0}), config)
    _validate_time(_require(config, "time", ""))

    solver = config.get("solver", {})
    if not isinstance(solver, dict):
        raise ValidationError("solver: expected an object")
    if "tol" in solver:
        _number(solver["tol"], "solver.tol", positive=True)
    if "scheme" in solver:
        _choice(solver["scheme"], VALID_SCHEMES, "solver.scheme")
    for flag in ("stroboscopic", "floquet"):
        if flag in solver and not isinstance(solver[flag], bool):
            raise ValidationError(f"solver.{flag}: expected true or false")

    observables = config.get("observables", [])
    if not isinstance(observables, list) or not all(isinstance(o, str) for o in observables):
        raise ValidationError("observables: expected a list of names")
    _validate_fits(config.get("fits", []))
    if "correlation_times_us" in config:
        _number_list(config["correlation_times_us"], "correlation_times_us")

    if "spam" in config:
        spam = config["spam"]
        if not isinstance(spam, dict):
            raise ValidationError("spam: expected an object")
        upper = _number(spam.get("upper", 0.93), "spam.upper", minimum=0.0)
        lower = _number(spam.get("lower", 0.32), "spam.lower", minimum=0.0)
        pair_upper = _number(spam.get("pair_upper", 0.86), "spam.pair_upper", minimum=0.0)
        if not lower < upper <= 1.0:
            raise ValidationError("spam: levels must satisfy 0 <= lower < upper <= 1")
        if not lower < pair_upper <= 1.0:
            raise ValidationError("spam.pair_upper: must satisfy lower < pair_upper <= 1")

    if "sweep" in config:
        sweep = config["sweep"]
        if not isinstance(sweep, dict):
            raise ValidationError("sweep: expected an object")
        parameter = _require(sweep, "parameter", "sweep.")
        if not isinstance(parameter, str) or not parameter:
            raise ValidationError("sweep.parameter: expected a dotted key path")
        _number_list(_require(sweep, "values", "sweep."), "sweep.values")
    return config
