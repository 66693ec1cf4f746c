"""
Scenario configurations: loading, overrides, the built-in catalog, and the
translation of a validated config into lattice, Hamiltonian, state and grid.
"""
from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .lattice import (
    Drive,
    HamiltonianMatrix,
    InteractionSpec,
    LabFrameSpec,
    LatticeSpec,
    Link,
    build_lab_frame_hamiltonian,
    build_pair_hamiltonian,
    build_single_hamiltonian,
    load_c3_table,
)
from .propagate import QuantumState, stroboscopic_grid
from .utils.logging import get_logger
from .utils.validation import ValidationError, validate_scenario_config

logger = get_logger("scenarios")

_INDEX = re.compile(r"^(\w+)\[(\d+)\]$")


@dataclass
class Scenario:
    name: str
    config: Dict[str, Any]
    description: str = ""

    def to_json(self) -> str:
        return json.dumps({"description": self.description, **self.config}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        config = json.loads(text)
        description = config.pop("description", "")
        validate_scenario_config(config)
        return cls(config["name"], config, description)


def load_config(path: Path) -> Dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as f:
            config = json.load(f)
    except FileNotFoundError:
        raise ValidationError(f"Config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON ({e})") from None
    if isinstance(config, dict):
        config.pop("description", None)
    return config


def _split_path(path: str) -> List[Any]:
    keys = []
    for token in path.split("."):
        match = _INDEX.match(token)
        if match:
            keys.extend([match.group(1), int(match.group(2))])
        elif token.isdigit():
            keys.append(int(token))
        elif token:
            keys.append(token)
        else:
            raise ValidationError(f"Malformed key path: {path!r}")
    return keys


def set_path(config: Dict[str, Any], path: str, value: Any) -> Dict[str, Any]:
    """Set a dotted key path (list items as links[3] or links.3) in place; missing objects are created."""
    keys = _split_path(path)
    node = config
    for key, following in zip(keys, keys[1:]):
        if isinstance(key, int):
            if not isinstance(node, list) or key >= len(node):
                raise ValidationError(f"{path}: index {key} is out of range")
            node = node[key]
        else:
            if not isinstance(node, dict):
                raise ValidationError(f"{path}: {key} is not inside an object")
            node = node.setdefault(key, [] if isinstance(following, int) else {})
    last = keys[-1]
    if isinstance(last, int):
        if not isinstance(node, list) or last >= len(node):
            raise ValidationError(f"{path}: index {last} is out of range")
    elif not isinstance(node, dict):
        raise ValidationError(f"{path}: {last} is not inside an object")
    node[last] = value
    return config


def parse_override(text: str):
    if "=" not in text:
        raise ValidationError(f"Override {text!r} must look like key.path=value")
    path, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path.strip(), value


def apply_overrides(config: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Apply --set overrides to a copy of config; values are JSON literals, else strings."""
    config = copy.deepcopy(config)
    for text in overrides:
        path, value = parse_override(text)
        set_path(config, path, value)
        logger.debug(f"Override {path} = {value!r}")
    return config


def build_lattice(lattice: Dict[str, Any]) -> LatticeSpec:
    sites = tuple(int(s) for s in lattice["sites"])
    boundary = lattice.get("boundary", "open")
    if "links" in lattice:
        links = tuple(
            Link(int(l["from"]), int(l["to"]), float(l["rabi_mhz"]), float(l.get("phase_rad", 0.0)))
            for l in lattice["links"]
        )
    else:
        rabi = float(lattice["rabi_mhz"])
        links = tuple(Link(j, j + 1, rabi) for j in sites[:-1])
        if boundary == "periodic":
            links += (Link(sites[-1], sites[0], rabi),)
    if "detunings" in lattice:
        detunings = tuple(float(d) for d in lattice["detunings"])
    else:
        tilt = float(lattice.get("tilt_mhz", 0.0))
        detunings = tuple(j * tilt for j in sites)
    drive_config = lattice.get("drive", {})
    drive = Drive(drive_config.get("type", "static"), float(drive_config.get("detuning_mhz", 0.0)))
    spec = LatticeSpec(sites, links, detunings, boundary, drive)
    if "wrap_phase_rad" in lattice:
        spec = spec.with_wrap_phase(float(lattice["wrap_phase_rad"]))
    return spec


def build_interaction(config: Dict[str, Any], c3_table_path: Optional[Path] = None) -> Optional[InteractionSpec]:
    section = config.get("interaction")
    if section is None:
        return None
    path = section.get("c3_table_path") or c3_table_path
    table = load_c3_table(Path(path) if path else None)
    return InteractionSpec.from_table(section.get("v_mhz"), table, section.get("separation_um"))


def build_hamiltonian(
    config: Dict[str, Any], lattice: LatticeSpec, inter: Optional[InteractionSpec]
) -> HamiltonianMatrix:
    if "lab_frame" in config:
        if inter is not None:
            raise ValidationError("lab_frame: only single-particle lab-frame runs are supported")
        rabi = lattice.links[0].rabi_mhz
        lab = LabFrameSpec(tuple(config["lab_frame"]["bare_energies_mhz"]), lattice.drive.detuning_mhz, rabi)
        return build_lab_frame_hamiltonian(lab, lattice.dim, lattice.sites[0])
    if inter is not None:
        return build_pair_hamiltonian(lattice, inter)
    return build_single_hamiltonian(lattice)


def build_initial_state(config: Dict[str, Any], lattice: LatticeSpec) -> QuantumState:
    state = config.get("initial_state", {"kind": "site", "site": 0})
    if state.get("kind", "site") == "pair":
        i, j = state.get("sites", [0, 0])
        return QuantumState.pair(lattice.sites, int(i), int(j))
    return QuantumState.site(lattice.sites, int(state.get("site", 0)))


def build_times(config: Dict[str, Any], H: HamiltonianMatrix) -> np.ndarray:
    time = config["time"]
    if config.get("solver", {}).get("stroboscopic", False):
        if H.period is None:
            raise ValidationError("solver.stroboscopic: the Hamiltonian has no common drive period")
        t_final = time["grid_us"][-1] if "grid_us" in time else time["t_final_us"]
        return stroboscopic_grid(H.period, float(t_final))
    if "grid_us" in time:
        return np.asarray(time["grid_us"], dtype=float)
    return np.linspace(0.0, float(time["t_final_us"]), int(time.get("n_points", 201)))


def _chain(sites, rabi, tilt=0.0, drive=None) -> Dict[str, Any]:
    lattice = {"sites": list(sites), "rabi_mhz": rabi, "tilt_mhz": tilt, "boundary": "open"}
    if drive:
        lattice["drive"] = drive
    return lattice


NINE_SITES = list(range(-4, 5))
RING_SITES = list(range(-3, 5))
ESCHER_TILTS = (0.0, 0.15, 0.30, 0.45)


def _escher(tilt: float, open_boundary: bool) -> Dict[str, Any]:
    if open_boundary:
        lattice = _chain(RING_SITES, 0.9, tilt)
    else:
        lattice = {
            "sites": RING_SITES, "rabi_mhz": 0.9, "tilt_mhz": tilt, "boundary": "periodic",
            "drive": {"type": "escher", "detuning_mhz": tilt},
        }
    return {
        "lattice": lattice,
        "initial_state": {"kind": "site", "site": 0},
        "time": {"t_final_us": 4.0, "n_points": 401},
        "observables": ["P_sites"],
    }


def _build_catalog() -> Dict[str, Scenario]:
    entries = [
        Scenario("fig1-qw", {
            "lattice": _chain(NINE_SITES, 0.45),
            "initial_state": {"kind": "site", "site": 0},
            "time": {"t_final_us": 6.0, "n_points": 301},
            "observables": ["P_sites", "lambda"],
        }, "Continuous-time quantum walk on an untilted 9-site lattice"),
        Scenario("fig1-bo", {
            "lattice": _chain(NINE_SITES, 0.45, 0.8),
            "initial_state": {"kind": "site", "site": 0},
            "time": {"t_final_us": 6.25, "n_points": 401},
            "observables": ["P_sites", "lambda"],
            "fits": [{"model": "bloch_oscillation", "target": "lambda"}],
        }, "Bloch oscillation of a single atom on a tilted 9-site lattice"),
        Scenario("fig1-bo-sweep", {
            "lattice": _chain(NINE_SITES, 0.45, 0.8),
            "initial_state": {"kind": "site", "site": 0},
            "time": {"t_final_us": 25.0, "n_points": 2001},
            "observables": ["lambda"],
            "fits": [{"model": "bloch_oscillation", "target": "lambda"}],
            "sweep": {"parameter": "lattice.tilt_mhz", "values": [0.2, 0.4, 0.6, 0.8, 1.0]},
        }, "Bloch frequency and amplitude versus tilt"),
        Scenario("fig3-pair-bo", {
            "lattice": _chain(NINE_SITES, 0.45, 0.8),
            "interaction": {"v_mhz": 0.34},
            "initial_state": {"kind": "pair", "sites": [0, 0]},
            "time": {"t_final_us": 10.0, "n_points": 501},
            "observables": ["P_sites", "P00"],
            "fits": [{"model": "damped_sine", "target": "P_site_0"}],
        }, "Interacting two-atom Bloch oscillation"),
        Scenario("fig3-scan", {
            "analysis": {
                "kind": "frequency_scan", "delta_mhz": 0.8, "rabi_mhz": 0.45,
                "v_grid": [round(0.1 * k, 10) for k in range(21)],
                "t_final_us": 10.0, "n_points": 501,
            },
        }, "Pair Bloch frequency and damping versus interaction strength"),
        Scenario("figS1-gap", {
            "analysis": {
                "kind": "gap_grid", "delta_mhz": 0.8,
                "v_grid": [round(1.6 * k / 19, 10) for k in range(20)],
                "rabi_grid": [round(0.02 + 0.48 * k / 19, 10) for k in range(20)],
            },
        }, "Central gap of the three-state pair model: closed form, approximation, eigensolver"),
        Scenario("figS2-breakdown", {
            "analysis": {
                "kind": "breakdown_map", "delta_mhz": 0.8,
                "rabi_grid": [0.15, 0.3, 0.45, 0.6],
                "v_grid": [round(0.2 * k, 10) for k in range(11)],
                "t_final_us": 10.0, "n_points": 501,
            },
        }, "Damping map over Rabi rate and interaction strength"),
        Scenario("figS3-longtime", {
            "analysis": {
                "kind": "gaussian_decay_scan", "delta_mhz": 5.0, "rabi_mhz": 0.9,
                "v_grid": [0.2, 0.4, 0.6, 0.8, 1.0], "t_final_us": 40.0,
            },
        }, "Gaussian decay rate and long-time frequency versus V under bichromatic driving"),
        Scenario("figS4-corr-static", {
            "lattice": _chain(NINE_SITES, 0.45, 0.8),
            "interaction": {"v_mhz": 0.8},
            "initial_state": {"kind": "pair", "sites": [0, 0]},
            "time": {"t_final_us": 2.0, "n_points": 201},
            "observables": ["P_sites", "P00"],
            "correlation_times_us": [0.5, 1.0, 2.0],
        }, "Pair correlations on the tilted lattice at V close to the tilt"),
        Scenario("figS4-corr-bichromatic", {
            "lattice": _chain(NINE_SITES, 0.9, 0.0, {"type": "bichromatic", "detuning_mhz": 5.0}),
            "interaction": {"v_mhz": 0.8},
            "initial_state": {"kind": "pair", "sites": [0, 0]},
            "time": {"t_final_us": 2.0, "n_points": 201},
            "observables": ["P_sites", "P00"],
            "correlation_times_us": [0.5, 1.0, 2.0],
        }, "Pair correlations under bichromatic driving"),
        Scenario("fig4-pairhop", {
            "analysis": {
                "kind": "pair_hopping_scan", "delta_mhz": 7.2, "rabi_mhz": 1.92,
                "v_grid": [0.0, 0.5, 0.8, 1.1, 1.4, 1.7, 2.0, 2.2],
            },
        }, "Two-level pair hopping rate versus V against the second-order rate"),
        Scenario("fig4-decay", {
            "lattice": _chain(NINE_SITES, 0.9, 0.0, {"type": "bichromatic", "detuning_mhz": 5.0}),
            "interaction": {"v_mhz": 0.6},
            "initial_state": {"kind": "pair", "sites": [0, 0]},
            "time": {"t_final_us": 7.0},
            "solver": {"stroboscopic": True},
            "observables": ["P_sites", "P00"],
            "fits": [
                {"model": "gaussian_decay", "target": "P00"},
                {"model": "cosine", "target": "P00"},
            ],
        }, "Decay of P_00 on the 9-site lattice under bichromatic driving"),
        Scenario("figS5-flux", {
            "analysis": {
                "kind": "calibrate_flux", "rabi_mhz": 0.9, "sites": RING_SITES,
                "wrap_phase_rad": 1.0, "n_phases": 32,
            },
        }, "Flux calibration of a flat 8-site ring from the refocusing population"),
    ]
    for tilt in ESCHER_TILTS:
        for open_boundary in (False, True):
            suffix = ("-obc" if open_boundary else "") + f"-d{tilt:.2f}"
            kind = "open chain" if open_boundary else "Escher ring"
            entries.append(Scenario(f"fig2-escher{suffix}", _escher(tilt, open_boundary),
                                    f"{kind}, tilt {tilt} MHz, Rabi 0.9 MHz"))
    entries.append(Scenario("fig2-escher", _escher(0.45, False), "Escher ring, tilt 0.45 MHz, Rabi 0.9 MHz"))

    catalog = {}
    for scenario in entries:
        if scenario.name in catalog:
            raise ValidationError(f"Duplicate scenario name: {scenario.name}")
        scenario.config = {"name": scenario.name, **scenario.config}
        catalog[scenario.name] = scenario
    return catalog


CATALOG: Dict[str, Scenario] = _build_catalog()


def list_scenarios() -> List[str]:
    return sorted(CATALOG)


def get_scenario(name: str) -> Scenario:
    """A deep copy of a built-in scenario."""
    if name not in CATALOG:
        raise ValidationError(f"Unknown scenario: {name}. Valid: {', '.join(list_scenarios())}")
    return copy.deepcopy(CATALOG[name])
