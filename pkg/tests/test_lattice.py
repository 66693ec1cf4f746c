import numpy as np
import pytest

from synlattice.lattice import (
    Drive,
    InteractionSpec,
    LabFrameSpec,
    LatticeSpec,
    Link,
    build_lab_frame_hamiltonian,
    build_pair_hamiltonian,
    build_single_hamiltonian,
    is_hermitian,
    load_c3_table,
    rotating_frame_reduce,
)
from synlattice.utils.validation import ValidationError


def test_chain_hamiltonian_has_tilt_and_half_rabi_links(tilted_chain):
    H = build_single_hamiltonian(tilted_chain)
    assert H.is_static
    assert is_hermitian(H.static)
    np.testing.assert_allclose(np.diag(H.static).real, 0.8 * np.arange(-4, 5))
    assert H.static[tilted_chain.index(1), tilted_chain.index(0)] == pytest.approx(0.225)
    assert H.static[tilted_chain.index(2), tilted_chain.index(0)] == 0


def test_link_phase_sits_on_target_source_element():
    spec = LatticeSpec((0, 1), (Link(0, 1, 1.0, np.pi / 3),), (0.0, 0.0))
    H = build_single_hamiltonian(spec).static
    assert H[1, 0] == pytest.approx(0.5 * np.exp(1j * np.pi / 3))
    assert H[0, 1] == pytest.approx(0.5 * np.exp(-1j * np.pi / 3))


@pytest.mark.parametrize("kwargs", [
    dict(sites=(0, 2), links=(), site_detunings=(0.0, 0.0)),
    dict(sites=(0, 1, 2), links=(Link(0, 2, 1.0),), site_detunings=(0.0,) * 3),
    dict(sites=(0, 1), links=(Link(0, 1, -1.0),), site_detunings=(0.0, 0.0)),
    dict(sites=(0, 1), links=(Link(0, 1, 1.0), Link(0, 1, 1.0)), site_detunings=(0.0, 0.0)),
    dict(sites=(0, 1), links=(Link(0, 1, 1.0),), site_detunings=(0.0,)),
    dict(sites=(0, 1, 2), links=(Link(2, 0, 1.0),), site_detunings=(0.0,) * 3),
    dict(sites=(0, 1), links=(), site_detunings=(0.0, 0.0), drive=Drive("escher", 0.1)),
])
def test_invalid_lattices_are_rejected(kwargs):
    with pytest.raises(ValidationError):
        LatticeSpec(**kwargs)


def test_ring_flux_and_wrap_phase():
    ring = LatticeSpec.ring(range(-3, 5), 0.9, wrap_phase_rad=0.4, escher=False)
    assert ring.wrap_link.source == 4 and ring.wrap_link.target == -3
    assert ring.flux == pytest.approx(0.4)
    assert ring.with_wrap_phase(1.1).flux == pytest.approx(1.1)
    assert ring.with_wrap_phase(-0.5).flux == pytest.approx(2 * np.pi - 0.5)
    assert LatticeSpec.chain(range(3), 1.0).flux is None


def test_open_ring_drops_wraparound_and_escher_drive():
    ring = LatticeSpec.ring(range(-3, 5), 0.9, 0.45)
    chain = ring.open_ring()
    assert chain.boundary == "open"
    assert chain.wrap_link is None
    assert chain.drive.kind == "static"
    assert chain.site_detunings == ring.site_detunings
    assert len(chain.links) == ring.dim - 1


def test_escher_wrap_term_carries_the_ring_tone():
    ring = LatticeSpec.ring(range(-3, 5), 0.9, 0.45)
    H = build_single_hamiltonian(ring)
    (term,) = H.terms
    assert term.tones_mhz == pytest.approx((8 * 0.45,))
    assert term.matrix[ring.index(4), ring.index(-3)] == pytest.approx(0.45)
    assert np.count_nonzero(term.matrix) == 1
    # the static part has no wraparound element
    assert H.static[ring.index(-3), ring.index(4)] == 0
    assert H.period == pytest.approx(1 / 3.6)
    assert is_hermitian(H.at(0.123))


@pytest.mark.parametrize("build", ["escher_ring", "bichromatic_pair", "lab_frame"])
def test_time_dependent_generators_are_hermitian(build, interaction, rng):
    if build == "escher_ring":
        H = build_single_hamiltonian(LatticeSpec.ring(range(-3, 5), 0.9, 0.45, wrap_phase_rad=0.7))
    elif build == "bichromatic_pair":
        spec = LatticeSpec.chain(range(-2, 3), 0.9, 0.1, Drive("bichromatic", 5.0))
        H = build_pair_hamiltonian(spec, interaction)
    else:
        H = build_lab_frame_hamiltonian(LabFrameSpec((0.0, 500.0, 1001.0), 2.0, 0.5), 3)
    for t in rng.uniform(0.0, 10.0, 50):
        assert is_hermitian(H.at(t))


def test_c3_table_contents(c3_table):
    assert len(c3_table) == 14
    assert c3_table[frozenset({0, -1})] == pytest.approx(756.4)
    assert c3_table[frozenset({0, 1})] == pytest.approx(-756.4)
    assert c3_table[frozenset({3, -4})] == pytest.approx(705.0)


def test_interaction_scaling(c3_table):
    inter = InteractionSpec.from_table(0.5, c3_table)
    assert inter.coupling(0, -1) == pytest.approx(0.5)
    assert inter.coupling(-1, 0) == pytest.approx(0.5)
    assert inter.coupling(1, 2) == pytest.approx(0.5 * -639.1 / 756.4)
    assert inter.coupling(0, 2) == 0.0
    assert inter.coupling(1, 1) == 0.0
    assert inter.with_strength(2.0).coupling(0, 1) == pytest.approx(-2.0)


def test_interaction_from_separation(c3_table):
    inter = InteractionSpec.from_table(table=c3_table, separation_um=10.0)
    assert inter.v_mhz == pytest.approx(756.4 / 1000.0)


def test_interaction_needs_reference_pair():
    with pytest.raises(ValidationError):
        InteractionSpec.from_table(1.0, {frozenset({1, 2}): 100.0})
    with pytest.raises(ValidationError):
        InteractionSpec.from_table(table={frozenset({0, -1}): 1.0})


def test_malformed_c3_table(tmp_path):
    path = tmp_path / "c3.csv"
    path.write_text("i,j,c3_mhz_um3\n0,-1,abc\n")
    with pytest.raises(ValidationError, match="malformed"):
        load_c3_table(path)


def test_pair_hamiltonian_exchange_and_swap_symmetry(tilted_chain, interaction):
    H = build_pair_hamiltonian(tilted_chain, interaction)
    n = tilted_chain.dim
    assert H.dim == n * n
    a, b = tilted_chain.index(0), tilted_chain.index(-1)
    assert H.static[a * n + b, b * n + a] == pytest.approx(0.34)
    swap = np.zeros((n * n, n * n))
    for i in range(n):
        for j in range(n):
            swap[i * n + j, j * n + i] = 1
    np.testing.assert_allclose(swap @ H.static @ swap, H.static, atol=1e-14)
    # diagonal is the sum of both atoms' tilt energies
    assert H.static[a * n + a, a * n + a] == pytest.approx(0.0)
    assert H.static[b * n + b, b * n + b] == pytest.approx(-1.6)


def test_bichromatic_reduction_has_symmetric_tones(nine_sites):
    spec = LatticeSpec.chain(nine_sites, 0.9, 0.0, Drive("bichromatic", 5.0))
    H = build_single_hamiltonian(spec)
    (term,) = H.terms
    assert sorted(term.tones_mhz) == pytest.approx([-5.0, 5.0])
    assert H.period == pytest.approx(0.2)
    np.testing.assert_allclose(H.static, 0.0)
    # at t = 0 both tones add: each link carries the full Rabi rate
    assert H.at(0.0)[spec.index(1), spec.index(0)] == pytest.approx(0.9)
    with pytest.raises(ValidationError):
        rotating_frame_reduce(LatticeSpec.chain(nine_sites, 0.9))


def test_bichromatic_reduction_keeps_site_detunings():
    spec = LatticeSpec.chain(range(-1, 2), 0.9, 0.3, Drive("bichromatic", 5.0))
    H = rotating_frame_reduce(spec)
    np.testing.assert_allclose(np.diag(H.static).real, [-0.3, 0.0, 0.3])
    np.testing.assert_allclose(H.static - np.diag(np.diag(H.static)), 0.0)


def test_lab_frame_tones_straddle_the_transitions():
    lab = LabFrameSpec((0.0, 500.0, 1001.0), 2.0, 0.5)
    assert lab.transition_frequencies == pytest.approx((500.0, 501.0))
    H = build_lab_frame_hamiltonian(lab, 3, first_site=-1)
    assert H.sites == (-1, 0, 1)
    assert [sorted(t.tones_mhz) for t in H.terms] == [pytest.approx([498.0, 502.0]), pytest.approx([499.0, 503.0])]
    with pytest.raises(ValidationError):
        build_lab_frame_hamiltonian(lab, 4)
