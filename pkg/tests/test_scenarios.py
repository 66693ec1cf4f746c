import numpy as np
import pytest

from synlattice.lattice import build_single_hamiltonian
from synlattice.scenarios import (
    CATALOG,
    Scenario,
    apply_overrides,
    build_initial_state,
    build_lattice,
    build_times,
    get_scenario,
    list_scenarios,
    load_config,
    parse_override,
    set_path,
)
from synlattice.utils.validation import ValidationError, validate_scenario_config


def test_catalog_entries_validate():
    assert len(list_scenarios()) == len(CATALOG)
    for name in list_scenarios():
        scenario = get_scenario(name)
        assert scenario.config["name"] == name
        assert scenario.description
        validate_scenario_config(scenario.config)


def test_catalog_names():
    names = list_scenarios()
    for expected in ("fig1-qw", "fig1-bo", "fig2-escher", "fig2-escher-obc-d0.45", "fig3-scan", "figS5-flux"):
        assert expected in names
    assert names == sorted(names)


def test_get_scenario_returns_a_copy():
    scenario = get_scenario("fig1-qw")
    scenario.config["lattice"]["rabi_mhz"] = 99.0
    assert get_scenario("fig1-qw").config["lattice"]["rabi_mhz"] == 0.45


def test_unknown_scenario():
    with pytest.raises(ValidationError, match="fig9"):
        get_scenario("fig9")


def test_json_round_trip():
    scenario = get_scenario("fig4-decay")
    again = Scenario.from_json(scenario.to_json())
    assert again.name == scenario.name
    assert again.config == scenario.config
    assert again.description == scenario.description


def test_load_config(tmp_path):
    path = tmp_path / "walk.json"
    path.write_text(get_scenario("fig1-qw").to_json())
    config = load_config(path)
    assert "description" not in config
    assert config["lattice"]["sites"] == list(range(-4, 5))

    with pytest.raises(ValidationError, match="not found"):
        load_config(tmp_path / "missing.json")
    (tmp_path / "broken.json").write_text("{\"name\": ")
    with pytest.raises(ValidationError, match="invalid JSON"):
        load_config(tmp_path / "broken.json")


def test_parse_override():
    assert parse_override("lattice.tilt_mhz=0.3") == ("lattice.tilt_mhz", 0.3)
    assert parse_override("solver.floquet=false") == ("solver.floquet", False)
    assert parse_override("solver.scheme=magnus4") == ("solver.scheme", "magnus4")
    assert parse_override("lattice.sites=[0, 1, 2]") == ("lattice.sites", [0, 1, 2])
    with pytest.raises(ValidationError):
        parse_override("lattice.tilt_mhz")


def test_apply_overrides_leaves_the_original_alone():
    config = get_scenario("fig1-bo").config
    changed = apply_overrides(config, ["lattice.tilt_mhz=0.4", "solver.scheme=magnus4", "fits[0].target=P_site_0"])
    assert changed["lattice"]["tilt_mhz"] == 0.4
    assert changed["solver"] == {"scheme": "magnus4"}
    assert changed["fits"][0]["target"] == "P_site_0"
    assert config["lattice"]["tilt_mhz"] == 0.8
    assert "solver" not in config


def test_set_path_list_indices():
    config = {"lattice": {"links": [{"rabi_mhz": 0.1}, {"rabi_mhz": 0.2}]}}
    set_path(config, "lattice.links[1].rabi_mhz", 0.5)
    set_path(config, "lattice.links.0.phase_rad", 1.0)
    assert config["lattice"]["links"] == [{"rabi_mhz": 0.1, "phase_rad": 1.0}, {"rabi_mhz": 0.5}]


@pytest.mark.parametrize("path", ["lattice.links[5].rabi_mhz", "lattice.rabi_mhz.value", "lattice..tilt_mhz"])
def test_set_path_errors(path):
    config = {"lattice": {"rabi_mhz": 0.45, "links": []}}
    with pytest.raises(ValidationError):
        set_path(config, path, 1.0)


def test_build_lattice_from_uniform_chain():
    lattice = build_lattice(get_scenario("fig1-bo").config["lattice"])
    assert lattice.sites == tuple(range(-4, 5))
    assert len(lattice.links) == 8
    assert lattice.site_detunings[0] == pytest.approx(-3.2)
    assert lattice.drive.kind == "static"


def test_build_lattice_ring_with_wrap_phase():
    lattice = build_lattice({
        "sites": list(range(-3, 5)), "rabi_mhz": 0.9, "boundary": "periodic", "wrap_phase_rad": 0.7,
    })
    assert len(lattice.links) == 8
    assert lattice.wrap_link.phase_rad == pytest.approx(0.7)
    assert lattice.flux == pytest.approx(0.7)


def test_build_initial_states():
    lattice = build_lattice(get_scenario("fig1-qw").config["lattice"])
    state = build_initial_state({"initial_state": {"kind": "site", "site": 2}}, lattice)
    assert state.amplitudes[lattice.index(2)] == 1
    pair = build_initial_state({"initial_state": {"kind": "pair", "sites": [0, 1]}}, lattice)
    assert pair.amplitudes.size == 81
    assert pair.amplitudes[lattice.index(0) * 9 + lattice.index(1)] == 1


def test_build_times():
    config = get_scenario("fig4-decay").config
    lattice = build_lattice(config["lattice"])
    H = build_single_hamiltonian(lattice)
    times = build_times(config, H)
    assert H.period == pytest.approx(0.2)
    np.testing.assert_allclose(np.diff(times), 0.2)
    assert times[0] == 0.0 and times[-1] == pytest.approx(7.0)

    static = build_single_hamiltonian(build_lattice(get_scenario("fig1-qw").config["lattice"]))
    with pytest.raises(ValidationError, match="stroboscopic"):
        build_times(config, static)
    assert build_times({"time": {"grid_us": [0.0, 0.5, 2.0]}}, static).tolist() == [0.0, 0.5, 2.0]
    assert build_times({"time": {"t_final_us": 1.0, "n_points": 5}}, static)[1] == 0.25


def test_escher_scenarios_carry_the_ring_tone():
    config = get_scenario("fig2-escher").config
    lattice = build_lattice(config["lattice"])
    H = build_single_hamiltonian(lattice)
    assert H.max_tone_mhz == pytest.approx(8 * 0.45)
    open_chain = build_lattice(get_scenario("fig2-escher-obc-d0.45").config["lattice"])
    assert open_chain.boundary == "open"
