import numpy as np
import pytest

from synlattice.lattice import Drive, InteractionSpec, LatticeSpec, build_pair_hamiltonian, build_single_hamiltonian
from synlattice.observables import (
    NoRefocusingError,
    observable_series,
    pair_correlations,
    pair_marginals,
    pair_site_populations,
    pair_state_population,
    refocusing_time,
    site_populations,
    wavepacket_width,
)
from synlattice.propagate import QuantumState, evolve
from synlattice.utils.validation import ValidationError


@pytest.fixture
def single_trajectory(tilted_chain):
    H = build_single_hamiltonian(tilted_chain)
    return evolve(H, QuantumState.site(tilted_chain.sites, 2), np.linspace(0, 5, 101))


@pytest.fixture
def pair_trajectory(tilted_chain, interaction):
    H = build_pair_hamiltonian(tilted_chain, interaction)
    return evolve(H, QuantumState.pair(tilted_chain.sites, 0, 1), np.linspace(0, 2, 41))


def test_site_populations_sum_to_one(single_trajectory):
    populations = site_populations(single_trajectory)
    assert populations.shape == (101, 9)
    np.testing.assert_allclose(populations.sum(axis=1), 1.0, atol=1e-10)


def test_width_starts_at_the_initial_site(single_trajectory):
    assert wavepacket_width(single_trajectory)[0] == pytest.approx(2.0)


def test_pair_observables_at_t0(pair_trajectory, tilted_chain):
    atom_a, atom_b = pair_marginals(pair_trajectory)
    assert atom_a[0, tilted_chain.index(0)] == pytest.approx(1.0)
    assert atom_b[0, tilted_chain.index(1)] == pytest.approx(1.0)
    averaged = pair_site_populations(pair_trajectory)
    assert averaged[0, tilted_chain.index(0)] == pytest.approx(0.5)
    assert averaged[0, tilted_chain.index(1)] == pytest.approx(0.5)
    assert pair_state_population(pair_trajectory, 0, 1)[0] == pytest.approx(1.0)
    assert pair_state_population(pair_trajectory)[0] == pytest.approx(0.0)
    np.testing.assert_allclose(averaged.sum(axis=1), 1.0, atol=1e-10)


def test_single_particle_functions_reject_pair_trajectories(pair_trajectory):
    with pytest.raises(ValidationError):
        site_populations(pair_trajectory)


def test_correlation_lookup_uses_nearest_grid_time(pair_trajectory):
    on_grid, off_grid = pair_correlations(pair_trajectory, [1.0, 1.01])
    assert on_grid.exact and on_grid.time_us == pytest.approx(1.0)
    assert not off_grid.exact and off_grid.time_us == pytest.approx(1.0)
    assert on_grid.matrix.sum() == pytest.approx(1.0)


def test_refocusing_time():
    assert refocusing_time(0.3) == pytest.approx(10 / 3)
    with pytest.raises(NoRefocusingError):
        refocusing_time(0.0)
    with pytest.raises(ValidationError):
        refocusing_time(-0.3)


def test_observable_series_defaults_and_checks(single_trajectory, pair_trajectory):
    single = observable_series(single_trajectory)
    assert set(single.series) == {"P_sites", "lambda"}
    assert single.check(1e-8) == []
    pair = observable_series(pair_trajectory, ["P00", "P_A"], [0.5])
    assert set(pair.series) == {"P00", "P_A"}
    assert len(pair.correlations) == 1
    assert pair.check(1e-8) == []
    with pytest.raises(ValidationError):
        observable_series(single_trajectory, ["P00"])


def _snapshot_at_two_us(spec, v):
    inter = InteractionSpec.from_table(v)
    H = build_pair_hamiltonian(spec, inter)
    traj = evolve(H, QuantumState.pair(spec.sites, 0, 0), np.linspace(0.0, 2.0, 201))
    (snapshot,) = pair_correlations(traj, [2.0])
    return snapshot


def test_static_tilt_near_resonance_favours_antidiagonal(nine_sites):
    snapshot = _snapshot_at_two_us(LatticeSpec.chain(nine_sites, 0.45, 0.8), 0.8)
    assert snapshot.exact
    assert snapshot.antidiagonal_weight() > snapshot.diagonal_weight()


def test_bichromatic_drive_favours_diagonal(nine_sites):
    spec = LatticeSpec.chain(nine_sites, 0.9, 0.0, Drive("bichromatic", 5.0))
    snapshot = _snapshot_at_two_us(spec, 0.8)
    assert snapshot.diagonal_weight() > snapshot.antidiagonal_weight()


def test_correlations_are_symmetric_and_match_marginals(tilted_chain, interaction):
    # |0,0> under a swap-symmetric generator stays swap symmetric
    H = build_pair_hamiltonian(tilted_chain, interaction)
    trajectory = evolve(H, QuantumState.pair(tilted_chain.sites, 0, 0), np.linspace(0, 3, 31))
    atom_a, atom_b = pair_marginals(trajectory)
    for k, snapshot in zip((0, 10, 30), pair_correlations(trajectory, [0.0, 1.0, 3.0])):
        np.testing.assert_allclose(snapshot.matrix, snapshot.matrix.T, atol=1e-10)
        np.testing.assert_allclose(snapshot.matrix.sum(axis=1), atom_a[k], atol=1e-12)
        np.testing.assert_allclose(snapshot.matrix.sum(axis=0), atom_b[k], atol=1e-12)


def test_width_stays_within_the_lattice(nine_sites, rng):
    spec = LatticeSpec.chain(nine_sites, 0.9, 0.2)
    H = build_single_hamiltonian(spec)
    for site in rng.choice(nine_sites, size=3, replace=False):
        width = wavepacket_width(evolve(H, QuantumState.site(spec.sites, int(site)), np.linspace(0, 20, 201)))
        assert np.all(width >= -1e-12)
        assert np.all(width <= max(abs(s) for s in nine_sites) + 1e-12)
