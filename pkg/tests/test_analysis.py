import numpy as np
import pytest

from synlattice.analysis import (
    BlochOscillationModel,
    CosineModel,
    DampedSineModel,
    FitError,
    GaussianDecayModel,
    PoleError,
    ScanRow,
    bloch_width_reference,
    breakdown_bounds,
    breakdown_map,
    calibrate_flux,
    classify_breakdown,
    create_fit_model,
    dominant_frequency,
    fit_bloch_oscillation,
    fit_cosine,
    fit_damped_sine,
    fit_gaussian_decay,
    fit_line,
    fit_power_law,
    frequency_vs_interaction_scan,
    gap_approx,
    gap_exact,
    gap_from_eigensolver,
    gaussian_decay_scan,
    pair_hopping_rate,
    pair_hopping_scan,
    predict_gap,
)
from synlattice.lattice import Drive, InteractionSpec, LatticeSpec, build_pair_hamiltonian, build_single_hamiltonian
from synlattice.observables import pair_state_population, wavepacket_width
from synlattice.propagate import QuantumState, evolve
from synlattice.utils.validation import ValidationError


def _circular_distance(a, b):
    return abs((a - b + np.pi) % (2 * np.pi) - np.pi)


class TestFitModels:
    def test_bloch_oscillation_recovers_parameters(self):
        t = np.linspace(0, 6.25, 401)
        y = BlochOscillationModel().evaluate(t, np.array([0.28, 0.8]))
        fit = fit_bloch_oscillation(t, y)
        assert fit.converged
        assert fit["A"] == pytest.approx(0.28, rel=1e-8)
        assert fit["omega"] == pytest.approx(0.8, rel=1e-8)

    def test_damped_sine_recovers_parameters(self):
        t = np.linspace(0, 10, 501)
        truth = {"A": 0.6, "gamma": 0.3, "omega": 0.9, "c": 0.2}
        y = DampedSineModel().evaluate(t, np.array(list(truth.values())))
        fit = fit_damped_sine(t, y)
        assert fit.converged
        for name, value in truth.items():
            assert fit[name] == pytest.approx(value, rel=1e-8)
        assert fit.gamma_h_mhz == pytest.approx(0.3 / (2 * np.pi), rel=1e-8)
        assert "gamma_h_mhz" in fit.as_dict()

    def test_undamped_signal_gives_zero_gamma(self):
        t = np.linspace(0, 10, 501)
        y = 0.7 * np.cos(np.pi * 0.85 * t) ** 2 + 0.1
        fit = fit_damped_sine(t, y)
        assert fit.converged
        assert abs(fit["gamma"]) < 1e-8
        assert fit["omega"] == pytest.approx(0.85, rel=1e-8)

    def test_damped_sine_window(self):
        t = np.linspace(0, 10, 501)
        y = DampedSineModel().evaluate(t, np.array([0.6, 0.3, 0.9, 0.2]))
        fit = fit_damped_sine(t, y, window_us=4.0)
        assert fit.n_points == 201
        assert fit["gamma"] == pytest.approx(0.3, rel=1e-8)

    def test_gaussian_decay_recovers_parameters(self):
        t = np.linspace(0, 4, 201)
        y = GaussianDecayModel().evaluate(t, np.array([0.05, 0.9, 0.12]))
        fit = fit_gaussian_decay(t, y)
        assert fit["beta"] == pytest.approx(0.12, rel=1e-8)
        assert fit["a"] == pytest.approx(0.05, rel=1e-6)

    def test_gaussian_decay_window(self):
        t = np.linspace(0, 10, 501)
        y = GaussianDecayModel().evaluate(t, np.array([0.0, 1.0, 0.3]))
        fit = fit_gaussian_decay(t, y, window_us=3.0)
        assert fit.n_points == 151
        assert fit["beta"] == pytest.approx(0.3, rel=1e-8)

    def test_flat_series_has_zero_decay(self):
        fit = fit_gaussian_decay(np.linspace(0, 5, 26), np.ones(26))
        assert fit.converged
        assert fit["beta"] == 0.0 and fit["b"] == 0.0 and fit["a"] == pytest.approx(1.0)

    @pytest.mark.parametrize("omega, t_final", [(2.0, 10.0), (0.72, 4.0)])
    def test_cosine_recovers_angular_frequency(self, omega, t_final):
        t = np.linspace(0, t_final, 201)
        y = CosineModel().evaluate(t, np.array([0.58, 0.41, omega]))
        fit = fit_cosine(t, y)
        assert fit.units["omega"] == "rad/us"
        assert fit["omega"] == pytest.approx(omega, rel=1e-8)

    def test_cosine_with_fixed_amplitude(self):
        t = np.linspace(0, 6, 301)
        y = -0.2 + np.cos(1.3 * t)
        fit = fit_cosine(t, y, free_amplitude=False)
        assert set(fit.params) == {"a", "omega"}
        assert fit["omega"] == pytest.approx(1.3, rel=1e-8)

    def test_unusable_input_raises(self):
        with pytest.raises(FitError):
            fit_damped_sine([0.0, 1.0, 2.0], [1.0, 0.5, 0.2])
        with pytest.raises(FitError):
            fit_bloch_oscillation(np.linspace(0, 1, 10), np.full(10, np.nan))
        with pytest.raises(FitError):
            fit_bloch_oscillation(np.linspace(0, 1, 10), np.zeros(9))

    def test_factory(self):
        assert create_fit_model("damped_sine").name == "damped_sine"
        assert create_fit_model("cosine", free_amplitude=False).param_names == ("a", "omega")
        with pytest.raises(ValidationError):
            create_fit_model("lorentzian")

    def test_dominant_frequency(self):
        t = np.linspace(0, 10, 501)
        assert dominant_frequency(t, np.cos(2 * np.pi * 1.3 * t)) == pytest.approx(1.3, abs=0.02)


class TestLineFits:
    def test_line(self):
        fit = fit_line([0.0, 1.0, 2.0, 3.0], [1.0, 3.0, 5.0, 7.0])
        assert fit.slope == pytest.approx(2.0)
        assert fit.intercept == pytest.approx(1.0)
        assert fit.r_squared == pytest.approx(1.0)

    def test_power_law(self):
        x = np.array([0.2, 0.4, 0.6, 0.8, 1.0])
        fit = fit_power_law(x, 3.0 * x ** 2)
        assert fit.exponent == pytest.approx(2.0)
        assert fit.prefactor == pytest.approx(3.0)
        with pytest.raises(FitError):
            fit_power_law([0.0, 1.0, 2.0], [1.0, 2.0, 3.0])


class TestGapOracles:
    def test_exact_gap_matches_eigensolver_on_grid(self, c3_table):
        delta = 0.8
        worst = 0.0
        for v in np.linspace(0.0, 2 * delta, 20):
            for rabi in np.linspace(0.02, 0.5, 20):
                worst = max(worst, abs(gap_exact(delta, v, rabi) - gap_from_eigensolver(delta, v, rabi, c3_table)))
        assert worst < 1e-6

    def test_approximation_away_from_resonance(self):
        # within 5% once |V - delta| >= 3 rabi; close to V = delta it deviates by up to ~18%
        delta = 0.8
        for rabi in np.linspace(0.02, 0.25 * delta, 10):
            for v in np.linspace(0.0, 2 * delta, 41):
                if abs(v - delta) >= 3 * rabi:
                    assert gap_approx(delta, v, rabi) == pytest.approx(gap_exact(delta, v, rabi), rel=0.05)

    def test_gap_without_coupling(self):
        assert gap_exact(0.8, 0.3, 0.0) == pytest.approx(0.5)
        assert gap_approx(0.8, 0.3, 0.0) == pytest.approx(0.5)

    def test_prediction_bundle(self):
        prediction = predict_gap(0.8, 0.34, 0.45)
        assert prediction.bounds_mhz == pytest.approx((0.35, 1.25))
        assert prediction.approx_mhz == pytest.approx(np.hypot(0.46, 0.45))

    def test_bounds_reject_negative_rabi(self):
        assert breakdown_bounds(0.8, 0.45) == pytest.approx((0.35, 1.25))
        with pytest.raises(ValidationError):
            breakdown_bounds(0.8, -0.1)

    def test_non_finite_input(self):
        with pytest.raises(ValidationError):
            gap_exact(np.nan, 0.1, 0.1)


class TestPairHoppingRate:
    def test_value(self):
        expected = 2 * 1.56 * 1.92 ** 2 / (7.2 ** 2 - 1.56 ** 2)
        assert pair_hopping_rate(1.56, 1.92, 7.2) == pytest.approx(expected)
        assert pair_hopping_rate(-1.56, 1.92, 7.2) == pytest.approx(expected)
        assert pair_hopping_rate(0.0, 1.92, 7.2) == 0.0

    def test_pole(self):
        with pytest.raises(PoleError):
            pair_hopping_rate(7.2, 1.92, 7.2)

    def test_free_pair_stays_put_under_bichromatic_drive(self):
        spec = LatticeSpec.chain((0, 1), 1.92, 0.0, Drive("bichromatic", 7.2))
        H = build_pair_hamiltonian(spec, InteractionSpec.from_table(0.0))
        traj = evolve(H, QuantumState.pair(spec.sites, 0, 0), np.linspace(0.0, 4.0, 401))
        single = build_single_hamiltonian(spec)
        atom = evolve(single, QuantumState.site(spec.sites, 0), np.linspace(0.0, 4.0, 401))
        assert np.min(atom.probabilities[:, 0]) >= 0.92
        np.testing.assert_allclose(pair_state_population(traj), atom.probabilities[:, 0] ** 2, atol=1e-6)


def _flat_ring(wrap_phase=0.0):
    return LatticeSpec.ring(range(-3, 5), 0.9, 0.0, wrap_phase, escher=False)


class TestFluxCalibration:
    def test_unbiased_ring_peaks_at_zero_flux(self):
        calibration = calibrate_flux(_flat_ring())
        assert _circular_distance(calibration.flux_offset, 0.0) < 0.02 * np.pi
        assert calibration.probe_site == 4
        assert calibration.t_probe_us == pytest.approx(2 / 0.9)
        assert calibration.is_monotone(np.pi / 2)
        assert calibration.populations.max() > 0.8

    def test_recovers_injected_phases(self, rng):
        for phase in rng.uniform(0, 2 * np.pi, 10):
            calibration = calibrate_flux(_flat_ring(phase), workers=2)
            assert _circular_distance(calibration.flux_offset, phase) < 0.02 * np.pi

    def test_coarse_sweep_is_flagged(self):
        assert calibrate_flux(_flat_ring(), n_phases=16).coarse

    def test_needs_a_flat_periodic_ring(self):
        with pytest.raises(ValidationError):
            calibrate_flux(LatticeSpec.chain(range(-3, 5), 0.9))
        with pytest.raises(ValidationError):
            calibrate_flux(LatticeSpec.ring(range(-3, 5), 0.9, 0.3, escher=False))


def test_classify_breakdown():
    rows = [
        ScanRow(0.0, 0.7, 0.0, 0.01, 0.0, True),
        ScanRow(0.8, 0.4, 0.0, 0.30, 0.0, True),
        ScanRow(1.0, 0.5, 0.0, 0.20, 0.0, True),
        ScanRow(2.0, 1.3, 0.0, 0.02, 0.0, True),
    ]
    summary = classify_breakdown(rows, 0.8, 0.45)
    assert summary.in_window.tolist() == [False, True, True, False]
    assert summary.damped.tolist() == [False, True, True, False]
    assert summary.inside_max_gamma == pytest.approx(0.30)
    assert summary.outside_median_gamma == pytest.approx(0.015)
    assert summary.contrast == pytest.approx(0.25 / 0.015)


@pytest.mark.slow
@pytest.mark.parametrize("delta", [0.2, 0.4, 0.6, 0.8, 1.0])
def test_bloch_oscillation_law(delta, nine_sites):
    rabi = 0.45
    spec = LatticeSpec.chain(nine_sites, rabi, delta)
    times = np.linspace(0.0, 5 / delta, 401)
    width = wavepacket_width(evolve(build_single_hamiltonian(spec), QuantumState.site(spec.sites, 0), times))
    fit = fit_bloch_oscillation(times, width)
    assert fit["omega"] == pytest.approx(delta, rel=0.02)
    if delta >= 0.4:
        reference = fit_bloch_oscillation(times, bloch_width_reference(times, delta, rabi))
        assert fit["A"] == pytest.approx(reference["A"], rel=0.05)


@pytest.mark.slow
@pytest.mark.parametrize("delta, ratio", [(0.6, 1.20), (0.8, 0.99), (1.0, 0.83)])
def test_bloch_amplitude_departs_from_small_amplitude_law(delta, ratio, nine_sites):
    # rabi / (2 delta) holds only near delta = 2 rabi; the departure is measured
    rabi = 0.45
    spec = LatticeSpec.chain(nine_sites, rabi, delta)
    times = np.linspace(0.0, 5 / delta, 401)
    width = wavepacket_width(evolve(build_single_hamiltonian(spec), QuantumState.site(spec.sites, 0), times))
    fit = fit_bloch_oscillation(times, width)
    assert fit["A"] / (rabi / (2 * delta)) == pytest.approx(ratio, abs=0.05)


def test_bloch_width_reference_small_amplitude():
    times = np.linspace(0.0, 2.0, 81)
    width = bloch_width_reference(times, 4.0, 0.05)
    # leading order: (rabi / delta)^2 (1 - cos 2 pi delta t)
    expected = (0.05 / 4.0) ** 2 * (1 - np.cos(2 * np.pi * 4.0 * times))
    np.testing.assert_allclose(width, expected, atol=1e-7)
    assert bloch_width_reference(0.0, 0.8, 0.45).tolist() == [0.0]


def test_free_pair_oscillates_at_the_tilt():
    # at V = 0 each atom Bloch-oscillates on its own, so the pair population
    # of site 0 repeats at delta rather than at gap_approx(delta, 0, rabi)
    rows = frequency_vs_interaction_scan(0.8, 0.45, [0.0])
    assert rows[0].converged
    assert rows[0].omega_mhz == pytest.approx(0.8, rel=0.02)
    assert not classify_breakdown(rows, 0.8, 0.45).damped[0]
    assert rows[0].gap_approx_mhz == pytest.approx(np.hypot(0.8, 0.45))


def test_interaction_scan_fit_window():
    kwargs = dict(t_final_us=4.0, n_points=201)
    full = frequency_vs_interaction_scan(0.8, 0.45, [2.0], **kwargs)
    same = frequency_vs_interaction_scan(0.8, 0.45, [2.0], window_us=4.0, **kwargs)
    early = frequency_vs_interaction_scan(0.8, 0.45, [2.0], window_us=2.0, **kwargs)
    assert same[0].omega_mhz == full[0].omega_mhz
    assert early[0].converged and np.isfinite(early[0].omega_mhz)
    with pytest.raises(ValidationError, match="window_us"):
        frequency_vs_interaction_scan(0.8, 0.45, [2.0], window_us=5.0, **kwargs)


@pytest.mark.slow
def test_interacting_frequency_and_breakdown():
    rows = frequency_vs_interaction_scan(0.8, 0.45, [0.34, 0.8, 2.0], workers=3)
    by_v = {r.v_mhz: r for r in rows}
    assert by_v[0.34].omega_mhz == pytest.approx(gap_approx(0.8, 0.34, 0.45), rel=0.10)
    summary = classify_breakdown(rows, 0.8, 0.45)
    assert summary.in_window.tolist() == [False, True, False]


@pytest.mark.slow
def test_breakdown_contrast_over_interaction_grid():
    v_grid = [round(0.1 * k, 10) for k in range(21)]
    rows = frequency_vs_interaction_scan(0.8, 0.45, v_grid, workers=4)
    summary = classify_breakdown(rows, 0.8, 0.45)
    gamma = np.array([r.gamma_per_us for r in rows])
    # damping peaks inside (delta - rabi, delta + rabi) and the inside median
    # stays a few times the outside one over a 10 us fit
    assert summary.in_window[int(np.nanargmax(gamma))]
    assert summary.contrast > 2.0
    assert summary.inside_max_gamma > 5 * summary.outside_median_gamma


def test_free_pair_does_not_decay():
    # two-tone drive at V = 0 returns every atom to its site each period
    scan = gaussian_decay_scan([0.0], t_final_us=10.0)
    row = scan.rows[0]
    assert row.converged
    assert row.beta_per_us2 == 0.0
    assert scan.exponent is None


@pytest.mark.slow
def test_gaussian_decay_scaling():
    scan = gaussian_decay_scan([0.2, 0.4, 0.6, 0.8, 1.0], workers=2)
    assert scan.exponent.exponent == pytest.approx(2.0, abs=0.2)
    assert scan.omega_line.r_squared > 0.99
    for row in scan.rows:
        assert row.beta_ratio == pytest.approx(1.0, abs=0.2)


@pytest.mark.slow
def test_pair_hopping_rate_against_simulation():
    rows = pair_hopping_scan([0.5, 1.0, 1.56, 2.2], workers=2)
    for row in rows:
        assert row.converged
        assert abs(row.deviation) < 0.10


def test_breakdown_map_shape():
    result = breakdown_map(0.8, [0.3, 0.45], [0.0, 2.0], workers=2, t_final_us=5.0, n_points=251)
    assert result.omega_mhz.shape == (2, 2)
    assert result.damped.dtype == bool
    assert np.all(np.isfinite(result.omega_mhz))
    assert result.rabi_mhz.tolist() == [0.3, 0.45]
