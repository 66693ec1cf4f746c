import copy

import pytest

from synlattice.utils.validation import ValidationError, validate_lattice_config, validate_scenario_config


@pytest.fixture
def config():
    return {
        "name": "walk",
        "lattice": {"sites": [-1, 0, 1], "rabi_mhz": 0.45, "tilt_mhz": 0.8},
        "initial_state": {"kind": "site", "site": 0},
        "time": {"t_final_us": 2.0, "n_points": 11},
    }


def test_valid_config_is_returned(config):
    assert validate_scenario_config(config) is config


@pytest.mark.parametrize("path, value, message", [
    ("name", "", "name"),
    ("lattice.sites", [0, 2, 3], "lattice.sites"),
    ("lattice.boundary", "twisted", "lattice.boundary"),
    ("lattice.drive", {"type": "escher", "detuning_mhz": 0.3}, "lattice.drive.type"),
    ("lattice.drive", {"type": "bichromatic"}, "lattice.drive.detuning_mhz"),
    ("lattice.wrap_phase_rad", 0.3, "lattice.wrap_phase_rad"),
    ("lattice.detunings", [0.0, 1.0], "lattice.detunings"),
    ("initial_state.site", 5, "initial_state.site"),
    ("initial_state.kind", "pair", "initial_state.kind"),
    ("time.n_points", 1, "time.n_points"),
    ("solver", {"scheme": "rk4"}, "solver.scheme"),
    ("solver", {"stroboscopic": "yes"}, "solver.stroboscopic"),
    ("fits", [{"model": "lorentzian", "target": "P00"}], "fits[0].model"),
    ("fits", [{"model": "cosine"}], "fits[0].target"),
    ("spam", {"upper": 0.3, "lower": 0.5}, "spam"),
    ("spam", {"lower": 0.32, "pair_upper": 0.2}, "spam.pair_upper"),
    ("sweep", {"parameter": "lattice.tilt_mhz", "values": []}, "sweep.values"),
])
def test_errors_name_the_key_path(config, path, value, message):
    node = config
    keys = path.split(".")
    for key in keys[:-1]:
        node = node[key]
    node[keys[-1]] = value
    with pytest.raises(ValidationError, match=message.replace("[", r"\[").replace("]", r"\]")):
        validate_scenario_config(config)


def test_link_errors_carry_their_index(config):
    config["lattice"]["links"] = [
        {"from": -1, "to": 0, "rabi_mhz": 0.4},
        {"from": 0, "to": 1, "rabi_mhz": "fast"},
    ]
    with pytest.raises(ValidationError, match=r"lattice\.links\[1\]\.rabi_mhz"):
        validate_scenario_config(config)


def test_missing_sections(config):
    broken = copy.deepcopy(config)
    del broken["time"]
    with pytest.raises(ValidationError, match="time"):
        validate_scenario_config(broken)
    with pytest.raises(ValidationError, match="lattice"):
        validate_lattice_config({"sites": [0, 1]})
    with pytest.raises(ValidationError):
        validate_scenario_config(["not", "an", "object"])


def test_pair_state_needs_interaction(config):
    config["initial_state"] = {"kind": "pair", "sites": [0, 0]}
    with pytest.raises(ValidationError, match="interaction"):
        validate_scenario_config(config)
    config["interaction"] = {"v_mhz": 0.34}
    validate_scenario_config(config)


def test_analysis_configs():
    validate_scenario_config({"name": "gaps", "analysis": {"kind": "gap_grid"}})
    with pytest.raises(ValidationError, match="analysis.kind"):
        validate_scenario_config({"name": "gaps", "analysis": {"kind": "tomography"}})


def test_periodic_lattice_with_wrap_link(config):
    config["lattice"] = {
        "sites": [-1, 0, 1],
        "boundary": "periodic",
        "links": [
            {"from": -1, "to": 0, "rabi_mhz": 0.9},
            {"from": 0, "to": 1, "rabi_mhz": 0.9},
            {"from": 1, "to": -1, "rabi_mhz": 0.9, "phase_rad": 0.5},
        ],
        "drive": {"type": "escher", "detuning_mhz": 0.3},
    }
    validate_scenario_config(config)
    config["lattice"]["links"][2]["to"] = 0
    with pytest.raises(ValidationError, match=r"links\[2\]"):
        validate_scenario_config(config)
