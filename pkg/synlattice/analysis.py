"""
Curve fits, closed-form predictions and calibration procedures.

Fits are Levenberg-Marquardt least squares with analytic Jacobians, seeded
from the dominant bin of the zero-padded discrete spectrum. Oscillation
frequencies are cyclic (MHz) except for the cosine model, whose omega is an
angular frequency in rad/us.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import least_squares
from scipy.special import jv
from scipy.stats import linregress

from .lattice import (
    TWO_PI,
    Drive,
    InteractionSpec,
    LatticeSpec,
    build_pair_hamiltonian,
    build_single_hamiltonian,
)
from .observables import pair_site_populations, pair_state_population, site_populations
from .parallel import map_points
from .propagate import DEFAULT_TOL, QuantumState, evolve, stroboscopic_grid
from .utils.logging import get_logger
from .utils.validation import ValidationError

logger = get_logger("analysis")

FIT_TOL = 1e-12
GRADIENT_TOL = 1e-6
FREQUENCY_PAD = 8
FLAT_TOL = 1e-9
BREAKDOWN_RATIO = 0.05
CALIBRATION_POINTS = 32
MIN_CALIBRATION_POINTS = 24
# samples kept for the peak fit: at least this fraction of the maximum, within +/- pi/2
PEAK_FRACTION = 0.3
DECAY_THRESHOLD = 0.2
FIT_MODELS = ("bloch_oscillation", "damped_sine", "gaussian_decay", "cosine")


class FitError(RuntimeError):
    """The series cannot be fitted at all (too short, non-finite, mismatched)."""


class NegativeRadicandError(ValueError):
    pass


class PoleError(ValueError):
    pass


@dataclass
class FitResult:
    model: str
    params: Dict[str, float]
    errors: Dict[str, float]
    residual_norm: float
    converged: bool
    iterations: int
    gradient_norm: float = 0.0
    message: str = ""
    n_points: int = 0
    units: Dict[str, str] = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    @property
    def gamma_h_mhz(self) -> Optional[float]:
        """Damping read as an energy over h (rate / 2 pi), the e^{-gamma t / hbar} convention."""
        if "gamma" not in self.params:
            return None
        return self.params["gamma"] / TWO_PI

    def as_dict(self) -> Dict[str, Any]:
        report = {
            "model": self.model,
            "params": dict(self.params),
            "errors": dict(self.errors),
            "units": dict(self.units),
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "message": self.message,
            "n_points": self.n_points,
        }
        if "gamma" in self.params:
            report["gamma_h_mhz"] = self.gamma_h_mhz
            report["gamma_h_mhz_err"] = self.errors["gamma"] / TWO_PI
        return report


def _check_series(times, values, n_params: int) -> Tuple[np.ndarray, np.ndarray]:
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.ndim != 1 or t.shape != y.shape:
        raise FitError(f"Times and values must be matching 1-D arrays, got {t.shape} and {y.shape}")
    if len(t) < n_params + 2:
        raise FitError(f"Need at least {n_params + 2} points to fit {n_params} parameters, got {len(t)}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise FitError("Series contains non-finite values")
    return t, y


def dominant_frequency(times, values, pad: int = FREQUENCY_PAD) -> float:
    """
    Cyclic frequency (MHz) of the strongest nonzero bin of the zero-padded spectrum.

    The spectrum is taken of the time derivative, so decaying offsets and slow
    drifts do not outweigh the oscillation.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(t) < 4:
        raise FitError("Need at least 4 samples for a spectrum")
    steps = np.diff(t)
    dt = float(np.mean(steps))
    if not np.allclose(steps, dt, rtol=1e-6, atol=0.0):
        uniform = np.linspace(t[0], t[-1], len(t))
        y = np.interp(uniform, t, y)
        dt = float(uniform[1] - uniform[0])
    slope = np.gradient(y, dt)
    n = pad * len(slope)
    spectrum = np.abs(np.fft.rfft(slope - slope.mean(), n))
    frequencies = np.fft.rfftfreq(n, d=dt)
    return float(frequencies[1 + int(np.argmax(spectrum[1:]))])


class FitModel(ABC):
    """Base class for all fit models."""

    name: str = ""
    param_names: Tuple[str, ...] = ()
    units: Dict[str, str] = {}

    @abstractmethod
    def evaluate(self, t: np.ndarray, p: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def jacobian(self, t: np.ndarray, p: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def seed(self, t: np.ndarray, y: np.ndarray) -> np.ndarray:
        pass

    def canonical(self, p: np.ndarray) -> np.ndarray:
        return p

    def fit(self, times, values, initial: Optional[Sequence[float]] = None) -> FitResult:
        t, y = _check_series(times, values, len(self.param_names))
        p0 = np.asarray(initial, dtype=float) if initial is not None else self.seed(t, y)
        logger.debug(f"{self.name} seed: {dict(zip(self.param_names, np.round(p0, 6)))}")

        result = least_squares(
            lambda p: self.evaluate(t, p) - y,
            p0,
            jac=lambda p: self.jacobian(t, p),
            method="lm",
            xtol=FIT_TOL,
            ftol=FIT_TOL,
            gtol=FIT_TOL,
            max_nfev=2000 * len(p0),
        )
        residual = result.fun
        jac = np.atleast_2d(result.jac)
        variance = float(residual @ residual) / max(1, len(y) - len(p0))
        covariance = np.linalg.pinv(jac.T @ jac) * variance
        errors = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
        gradient = float(np.max(np.abs(jac.T @ residual)))
        converged = bool(result.success) and gradient <= GRADIENT_TOL * max(1.0, len(y))
        if not converged:
            logger.warning(f"{self.name} fit did not converge: {result.message} (gradient {gradient:.2e})")

        params = self.canonical(np.array(result.x))
        return FitResult(
            model=self.name,
            params={n: float(v) for n, v in zip(self.param_names, params)},
            errors={n: float(e) for n, e in zip(self.param_names, errors)},
            residual_norm=float(np.linalg.norm(residual)),
            converged=converged,
            iterations=int(result.nfev),
            gradient_norm=gradient,
            message=str(result.message),
            n_points=len(y),
            units=dict(self.units),
        )


class BlochOscillationModel(FitModel):
    """lambda(t) = A [1 - cos(2 pi omega t)]"""

    name = "bloch_oscillation"
    param_names = ("A", "omega")
    units = {"A": "sites", "omega": "MHz"}

    def evaluate(self, t, p):
        A, omega = p
        return A * (1.0 - np.cos(TWO_PI * omega * t))

    def jacobian(self, t, p):
        A, omega = p
        phase = TWO_PI * omega * t
        return np.column_stack([1.0 - np.cos(phase), A * TWO_PI * t * np.sin(phase)])

    def seed(self, t, y):
        omega = dominant_frequency(t, y)
        if omega * (t[-1] - t[0]) < 1.0:
            logger.warning("Series covers less than one Bloch period; the frequency is poorly constrained")
        return np.array([0.5 * (y.max() - y.min()), omega])

    def canonical(self, p):
        return np.array([p[0], abs(p[1])])


class DampedSineModel(FitModel):
    """P(t) = A e^{-gamma t} cos^2(pi omega t) + c, gamma a rate in 1/us."""

    name = "damped_sine"
    param_names = ("A", "gamma", "omega", "c")
    units = {"A": "", "gamma": "1/us", "omega": "MHz", "c": ""}

    def evaluate(self, t, p):
        A, gamma, omega, c = p
        return A * np.exp(-gamma * t) * np.cos(np.pi * omega * t) ** 2 + c

    def jacobian(self, t, p):
        A, gamma, omega, c = p
        envelope = np.exp(-gamma * t)
        cos2 = np.cos(np.pi * omega * t) ** 2
        return np.column_stack([
            envelope * cos2,
            -t * A * envelope * cos2,
            -A * envelope * np.pi * t * np.sin(TWO_PI * omega * t),
            np.ones_like(t),
        ])

    def seed(self, t, y):
        omega = dominant_frequency(t, y)
        quarter = max(2, len(y) // 4)
        early, late = np.ptp(y[:quarter]), np.ptp(y[-quarter:])
        span = t[-quarter // 2] - t[quarter // 2]
        gamma = math.log(early / late) / span if late > 0 and early > late and span > 0 else 0.0
        return np.array([y.max() - y.min(), gamma, omega, y.min()])

    def canonical(self, p):
        return np.array([p[0], p[1], abs(p[2]), p[3]])


class GaussianDecayModel(FitModel):
    """P(t) = a + b exp(-beta t^2), beta in 1/us^2."""

    name = "gaussian_decay"
    param_names = ("a", "b", "beta")
    units = {"a": "", "b": "", "beta": "1/us^2"}

    def __init__(self, flat_tol: float = FLAT_TOL):
        self.flat_tol = flat_tol

    def evaluate(self, t, p):
        a, b, beta = p
        return a + b * np.exp(-beta * t ** 2)

    def jacobian(self, t, p):
        a, b, beta = p
        decay = np.exp(-beta * t ** 2)
        return np.column_stack([np.ones_like(t), decay, -b * t ** 2 * decay])

    def seed(self, t, y):
        a = y.min()
        b = y[0] - a
        below = np.nonzero((y - a) <= b / math.e)[0] if b > 0 else np.array([], dtype=int)
        t_e = t[below[0]] if below.size and t[below[0]] > 0 else max(t[-1], 1e-12)
        return np.array([a, b, 1.0 / t_e ** 2])

    def fit(self, times, values, initial=None) -> FitResult:
        t, y = _check_series(times, values, len(self.param_names))
        if np.ptp(y) < self.flat_tol:
            logger.info("Flat series: decay rate fixed at zero")
            return FitResult(
                self.name, {"a": float(y.mean()), "b": 0.0, "beta": 0.0},
                {"a": 0.0, "b": 0.0, "beta": 0.0}, float(np.linalg.norm(y - y.mean())),
                True, 0, 0.0, "flat series", len(y), dict(self.units),
            )
        return super().fit(t, y, initial)


class CosineModel(FitModel):
    """P(t) = a + b cos(omega t), omega angular (rad/us); b is fixed at 1 unless free."""

    name = "cosine"
    units = {"a": "", "b": "", "omega": "rad/us"}

    def __init__(self, free_amplitude: bool = True):
        self.free_amplitude = free_amplitude
        self.param_names = ("a", "b", "omega") if free_amplitude else ("a", "omega")

    def _unpack(self, p):
        if self.free_amplitude:
            return p
        return p[0], 1.0, p[1]

    def evaluate(self, t, p):
        a, b, omega = self._unpack(p)
        return a + b * np.cos(omega * t)

    def jacobian(self, t, p):
        a, b, omega = self._unpack(p)
        columns = [np.ones_like(t)]
        if self.free_amplitude:
            columns.append(np.cos(omega * t))
        columns.append(-b * t * np.sin(omega * t))
        return np.column_stack(columns)

    def seed(self, t, y):
        span = t[-1] - t[0]
        frequency = dominant_frequency(t, y)
        if self.free_amplitude:
            a, b = 0.5 * (y.max() + y.min()), 0.5 * (y.max() - y.min())
            if y[0] < a:
                b = -b
        else:
            a, b = y[0] - 1.0, 1.0
        if frequency * span >= 1.0:
            omega = TWO_PI * frequency
        else:
            # less than a cycle in view: read the phase reached at the end
            ratio = np.clip((y[-1] - a) / b, -1.0, 1.0) if b else -1.0
            omega = (math.acos(ratio) or math.pi) / span
        return np.array([a, b, omega] if self.free_amplitude else [a, omega])

    def canonical(self, p):
        p = np.array(p)
        p[-1] = abs(p[-1])
        return p


class GaussianPeakModel(FitModel):
    """y(x) = c + h exp(-(x - mu)^2 / (2 sigma^2))"""

    name = "gaussian_peak"
    param_names = ("c", "h", "mu", "sigma")
    units = {"c": "", "h": "", "mu": "rad", "sigma": "rad"}

    def evaluate(self, x, p):
        c, h, mu, sigma = p
        return c + h * np.exp(-((x - mu) ** 2) / (2 * sigma ** 2))

    def jacobian(self, x, p):
        c, h, mu, sigma = p
        g = np.exp(-((x - mu) ** 2) / (2 * sigma ** 2))
        return np.column_stack([
            np.ones_like(x),
            g,
            h * g * (x - mu) / sigma ** 2,
            h * g * (x - mu) ** 2 / sigma ** 3,
        ])

    def seed(self, x, y):
        width = max(float(np.ptp(x)) / 4.0, 1e-3)
        return np.array([y.min(), y.max() - y.min(), float(x[np.argmax(y)]), width])

    def canonical(self, p):
        return np.array([p[0], p[1], p[2], abs(p[3])])


def create_fit_model(name: str, **kwargs) -> FitModel:
    """Factory function to create fit model instances"""
    if name == "bloch_oscillation":
        return BlochOscillationModel()
    elif name == "damped_sine":
        return DampedSineModel()
    elif name == "gaussian_decay":
        return GaussianDecayModel()
    elif name == "cosine":
        return CosineModel(free_amplitude=kwargs.get("free_amplitude", True))
    elif name == "gaussian_peak":
        return GaussianPeakModel()
    else:
        raise ValidationError(f"Unknown fit model: {name}. Valid: {', '.join(FIT_MODELS)}")


def _window(times, values, window_us: Optional[float]):
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if window_us is None:
        return t, y
    keep = t <= t[0] + window_us + 1e-12
    return t[keep], y[keep]


def fit_bloch_oscillation(times, width) -> FitResult:
    return BlochOscillationModel().fit(times, width)


def fit_damped_sine(times, population, window_us: Optional[float] = None) -> FitResult:
    return DampedSineModel().fit(*_window(times, population, window_us))


def fit_gaussian_decay(
    times, population, window_us: Optional[float] = None, flat_tol: float = FLAT_TOL
) -> FitResult:
    """A spread below flat_tol counts as no decay (beta = 0)."""
    return GaussianDecayModel(flat_tol).fit(*_window(times, population, window_us))


def fit_cosine(times, population, free_amplitude: bool = True, window_us: Optional[float] = None) -> FitResult:
    return CosineModel(free_amplitude).fit(*_window(times, population, window_us))


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    slope_err: float
    intercept_err: float
    r_squared: float
    n_points: int


@dataclass(frozen=True)
class PowerLawFit:
    """y = prefactor * x^exponent, fitted as a line in log-log space."""

    exponent: float
    exponent_err: float
    prefactor: float
    r_squared: float
    n_points: int


def fit_line(x, y) -> LineFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3 or x.shape != y.shape or not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise FitError("A line fit needs at least 3 finite (x, y) pairs")
    result = linregress(x, y)
    return LineFit(
        float(result.slope), float(result.intercept), float(result.stderr),
        float(result.intercept_stderr), float(result.rvalue ** 2), len(x),
    )


def fit_power_law(x, y) -> PowerLawFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise FitError("Power-law fit needs strictly positive data")
    line = fit_line(np.log(x), np.log(y))
    return PowerLawFit(line.slope, line.slope_err, float(np.exp(line.intercept)), line.r_squared, line.n_points)


def _check_finite(**values: float):
    for name, value in values.items():
        if not np.isfinite(value):
            raise ValidationError(f"{name} must be finite, got {value}")


def gap_exact(delta_mhz: float, v_mhz: float, rabi_mhz: float) -> float:
    """Central gap (MHz) of the pair Hamiltonian truncated to states {-1, 0, 1}."""
    _check_finite(delta=delta_mhz, v=v_mhz, rabi=rabi_mhz)
    d, v, w = delta_mhz, v_mhz, rabi_mhz
    inner = (6 * d * d + 4 * d * v - 2 * v * v + w * w) ** 2 + 8 * w * w * (3 * d * d - 10 * d * v + 3 * v * v + w * w)
    if inner < 0:
        raise NegativeRadicandError(f"Inner radicand is negative ({inner:.3e}) at delta={d}, V={v}, rabi={w}")
    outer = 10 * d * d - 4 * d * v + 2 * v * v + 5 * w * w - math.sqrt(inner)
    if outer < 0:
        scale = 10 * d * d + 2 * v * v + 5 * w * w
        if outer < -1e-12 * max(scale, 1.0):
            raise NegativeRadicandError(f"Outer radicand is negative ({outer:.3e}) at delta={d}, V={v}, rabi={w}")
        outer = 0.0
    return 0.5 * math.sqrt(outer)


def gap_approx(delta_mhz: float, v_mhz: float, rabi_mhz: float) -> float:
    """G ~ sqrt(|delta - V|^2 + rabi^2), valid for small rabi."""
    _check_finite(delta=delta_mhz, v=v_mhz, rabi=rabi_mhz)
    return math.hypot(delta_mhz - v_mhz, rabi_mhz)


def gap_from_eigensolver(
    delta_mhz: float,
    v_mhz: float,
    rabi_mhz: float,
    table: Optional[Dict[FrozenSet[int], float]] = None,
) -> float:
    """
    Smallest positive eigenvalue of the explicit two-atom Hamiltonian on sites {-1, 0, 1}.

    The spectrum is symmetric about a threefold zero level; the gap is measured
    from that level to the nearest branch above it.
    """
    spec = LatticeSpec.chain((-1, 0, 1), rabi_mhz, delta_mhz)
    inter = InteractionSpec.from_table(v_mhz, table)
    energies = eigh(build_pair_hamiltonian(spec, inter).static, eigvals_only=True)
    threshold = 1e-9 * max(1.0, float(np.max(np.abs(energies))))
    positive = energies[energies > threshold]
    return float(positive.min()) if positive.size else 0.0


def breakdown_bounds(delta_mhz: float, rabi_mhz: float) -> Tuple[float, float]:
    """Interaction window (V_lo, V_hi) = (delta - rabi, delta + rabi) where Stark localization fails."""
    _check_finite(delta=delta_mhz, rabi=rabi_mhz)
    if rabi_mhz < 0:
        raise ValidationError(f"Rabi rate must be non-negative, got {rabi_mhz}")
    return delta_mhz - rabi_mhz, delta_mhz + rabi_mhz


@dataclass(frozen=True)
class GapPrediction:
    exact_mhz: float
    approx_mhz: float
    bounds_mhz: Tuple[float, float]


def predict_gap(delta_mhz: float, v_mhz: float, rabi_mhz: float) -> GapPrediction:
    return GapPrediction(
        gap_exact(delta_mhz, v_mhz, rabi_mhz),
        gap_approx(delta_mhz, v_mhz, rabi_mhz),
        breakdown_bounds(delta_mhz, rabi_mhz),
    )


def pair_hopping_rate(v_mhz: float, rabi_mhz: float, delta_mhz: float) -> float:
    """
    Second-order rate (MHz) of the |0,0> <-> |1,1> pair transition under a
    bichromatic drive: 2 |V| rabi^2 / |delta^2 - V^2|. The singlet/triplet
    intermediates are summed out.
    """
    _check_finite(v=v_mhz, rabi=rabi_mhz, delta=delta_mhz)
    if math.isclose(abs(v_mhz), abs(delta_mhz), rel_tol=1e-12, abs_tol=1e-15):
        raise PoleError(f"Pair hopping rate diverges at |V| = delta = {delta_mhz}")
    return 2.0 * abs(v_mhz) * rabi_mhz ** 2 / abs(delta_mhz ** 2 - v_mhz ** 2)


def bloch_width_reference(times, delta_mhz: float, rabi_mhz: float) -> np.ndarray:
    """
    Width sum |j| P_j(t) of a single atom released from site 0 of an unbounded
    tilted chain. P_j = J_j(x)^2 with x = (2 rabi / delta) sin(pi delta t).

    On a finite chain this is the reference for the fitted Bloch amplitude
    while the wavepacket stays clear of the edges.
    """
    _check_finite(delta=delta_mhz, rabi=rabi_mhz)
    if delta_mhz == 0:
        raise ValidationError("An untilted chain has no Bloch oscillation")
    x = (2.0 * rabi_mhz / delta_mhz) * np.sin(np.pi * delta_mhz * np.atleast_1d(np.asarray(times, dtype=float)))
    orders = np.arange(1, int(2.0 * np.max(np.abs(x), initial=0.0)) + 25)
    return 2.0 * np.sum(orders[:, None] * jv(orders[:, None], x[None, :]) ** 2, axis=0)


def _wrap_angle(x):
    """Map angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), TWO_PI)


@dataclass
class FluxCalibration:
    """
    Sweep of the applied wraparound phase and the flux it reveals.

    peak_phase is the applied phase at which the probe population peaks;
    flux_offset is the flux the ring already carried, -peak_phase in (-pi, pi].
    """

    phases: np.ndarray
    populations: np.ndarray
    peak_phase: float
    flux_offset: float
    uncertainty: float
    t_probe_us: float
    probe_site: int
    fit: FitResult
    coarse: bool = False

    def total_flux(self) -> np.ndarray:
        return _wrap_angle(self.phases + self.flux_offset)

    def is_monotone(self, max_flux: float = np.pi / 2) -> bool:
        """Probe population falls as |flux| grows from 0 up to max_flux (on the sweep grid)."""
        magnitude = np.abs(self.total_flux())
        keep = magnitude <= max_flux + 1e-9
        order = np.argsort(magnitude[keep])
        values = self.populations[keep][order]
        return bool(np.all(np.diff(values) <= 1e-9))

    def as_dict(self) -> Dict[str, Any]:
        return {
            "phases_rad": self.phases.tolist(),
            "populations": self.populations.tolist(),
            "peak_phase_rad": self.peak_phase,
            "flux_offset_rad": self.flux_offset,
            "uncertainty_rad": self.uncertainty,
            "t_probe_us": self.t_probe_us,
            "probe_site": self.probe_site,
            "coarse": self.coarse,
            "fit": self.fit.as_dict(),
        }


def calibrate_flux(
    ring: LatticeSpec,
    t_probe_us: Optional[float] = None,
    n_phases: int = CALIBRATION_POINTS,
    start_site: int = 0,
    probe_site: Optional[int] = None,
    tol: float = DEFAULT_TOL,
    workers: int = 1,
) -> FluxCalibration:
    """
    Locate zero flux on a flat ring.

    The wraparound phase is swept over [0, 2 pi) on top of whatever the ring
    carries; the population of the site opposite start_site is read at
    t_probe = 2 / rabi, where the two counter-propagating paths refocus, and a
    Gaussian is fitted to the main lobe of the response.
    """
    if ring.boundary != "periodic":
        raise ValidationError("Flux calibration needs a periodic ring")
    if ring.drive.detuning_mhz != 0 or any(d != 0 for d in ring.site_detunings):
        raise ValidationError("Flux calibration needs a flat ring (zero tilt)")
    if n_phases < 8:
        raise ValidationError(f"Need at least 8 sweep phases, got {n_phases}")
    wrap = ring.wrap_link
    if wrap.rabi_mhz <= 0:
        raise ValidationError("Wraparound link has zero Rabi rate")
    t_probe = t_probe_us if t_probe_us is not None else 2.0 / wrap.rabi_mhz
    if probe_site is None:
        probe_site = ring.sites[(ring.index(start_site) + ring.dim // 2) % ring.dim]
    coarse = n_phases < MIN_CALIBRATION_POINTS
    if coarse:
        logger.warning(f"Calibration sweep of {n_phases} points is coarse; {MIN_CALIBRATION_POINTS}+ recommended")

    phases = TWO_PI * np.arange(n_phases) / n_phases
    psi0 = QuantumState.site(ring.sites, start_site)
    probe_index = ring.index(probe_site)

    def probe(phase: float) -> float:
        spec = ring.with_wrap_phase(wrap.phase_rad + phase)
        trajectory = evolve(build_single_hamiltonian(spec), psi0, [0.0, t_probe], tol)
        return float(site_populations(trajectory)[-1, probe_index])

    outcomes = map_points(probe, list(phases), workers, "phase")
    failed = [o for o in outcomes if not o.ok]
    if failed:
        raise FitError(f"{len(failed)} calibration point(s) failed: {failed[0].error}")
    populations = np.array([o.value for o in outcomes])
    if np.ptp(populations) < 1e-3:
        raise FitError("Flat response: no refocusing peak to calibrate against")

    k = int(np.argmax(populations))
    offsets = _wrap_angle(phases - phases[k])
    keep = (populations >= PEAK_FRACTION * populations[k]) & (np.abs(offsets) < np.pi / 2)
    if keep.sum() < 5:
        keep = np.zeros_like(keep)
        keep[np.argsort(np.abs(offsets))[:5]] = True
    order = np.argsort(offsets[keep])
    fit = GaussianPeakModel().fit(offsets[keep][order], populations[keep][order])

    peak_phase = float(np.mod(phases[k] + fit["mu"], TWO_PI))
    flux_offset = float(_wrap_angle(-peak_phase))
    calibration = FluxCalibration(
        phases, populations, peak_phase, flux_offset, fit.errors["mu"], t_probe, probe_site, fit, coarse,
    )
    logger.info(
        f"Flux calibration: peak at applied phase {peak_phase / np.pi:.4f} pi, "
        f"ring flux {flux_offset / np.pi:.4f} pi"
    )
    return calibration


@dataclass
class ScanRow:
    v_mhz: float
    omega_mhz: float
    omega_err: float
    gamma_per_us: float
    gamma_err: float
    converged: bool
    gap_approx_mhz: float = float("nan")
    gap_exact_mhz: float = float("nan")
    message: str = ""

    def as_dict(self) -> Dict[str, Any]:
        return {
            "V_mhz": self.v_mhz,
            "omega_mhz": self.omega_mhz,
            "omega_err": self.omega_err,
            "gamma_per_us": self.gamma_per_us,
            "gamma_err": self.gamma_err,
            "converged": self.converged,
            "gap_approx_mhz": self.gap_approx_mhz,
            "gap_exact_mhz": self.gap_exact_mhz,
            "message": self.message,
        }


SCAN_COLUMNS = ("V_mhz", "omega_mhz", "omega_err", "gamma_per_us", "gamma_err", "converged",
                "gap_approx_mhz", "gap_exact_mhz", "message")


def frequency_vs_interaction_scan(
    delta_mhz: float,
    rabi_mhz: float,
    v_grid: Sequence[float],
    sites: Sequence[int] = tuple(range(-4, 5)),
    t_final_us: float = 10.0,
    n_points: int = 501,
    site: int = 0,
    table: Optional[Dict[FrozenSet[int], float]] = None,
    workers: int = 1,
    window_us: Optional[float] = None,
) -> List[ScanRow]:
    """
    Pair Bloch oscillation frequency and damping versus interaction strength.

    Each point evolves |0,0> on the tilted chain and fits the pair-averaged
    population of `site` with the damped cos^2 model. window_us restricts the
    fit to the early dynamics; None fits the whole run.
    """
    spec = LatticeSpec.chain(sites, rabi_mhz, delta_mhz)
    base = InteractionSpec.from_table(0.0, table)
    times = np.linspace(0.0, t_final_us, n_points)
    psi0 = QuantumState.pair(spec.sites, 0, 0)
    column = spec.index(site)
    if window_us is not None and not 0 < window_us <= t_final_us:
        raise ValidationError(f"window_us must lie in (0, {t_final_us}], got {window_us}")

    def point(v: float) -> ScanRow:
        trajectory = evolve(build_pair_hamiltonian(spec, base.with_strength(v)), psi0, times)
        fit = fit_damped_sine(times, pair_site_populations(trajectory)[:, column], window_us)
        try:
            exact = gap_exact(delta_mhz, v, rabi_mhz)
        except NegativeRadicandError:
            exact = float("nan")
        return ScanRow(
            float(v), fit["omega"], fit.errors["omega"], fit["gamma"], fit.errors["gamma"],
            fit.converged, gap_approx(delta_mhz, v, rabi_mhz), exact, fit.message,
        )

    rows = []
    for outcome in map_points(point, list(v_grid), workers, "V point"):
        if outcome.ok:
            rows.append(outcome.value)
        else:
            nan = float("nan")
            rows.append(ScanRow(float(outcome.point), nan, nan, nan, nan, False, message=outcome.error))
    return rows


@dataclass
class BreakdownSummary:
    window_mhz: Tuple[float, float]
    v_mhz: np.ndarray
    in_window: np.ndarray
    damped: np.ndarray
    outside_median_gamma: float
    inside_median_gamma: float
    inside_max_gamma: float

    @property
    def contrast(self) -> float:
        """Median damping inside the window over the median outside it."""
        if not self.outside_median_gamma > 0:
            return float("inf")
        return self.inside_median_gamma / self.outside_median_gamma

    def as_dict(self) -> Dict[str, Any]:
        return {
            "window_mhz": list(self.window_mhz),
            "v_mhz": self.v_mhz.tolist(),
            "in_window": self.in_window.tolist(),
            "damped": self.damped.tolist(),
            "outside_median_gamma": self.outside_median_gamma,
            "inside_median_gamma": self.inside_median_gamma,
            "inside_max_gamma": self.inside_max_gamma,
            "contrast": self.contrast,
        }


def classify_breakdown(
    rows: Sequence[ScanRow],
    delta_mhz: float,
    rabi_mhz: float,
    threshold: float = BREAKDOWN_RATIO,
) -> BreakdownSummary:
    """A point is damped when gamma exceeds threshold * omega; the window is V in (delta - rabi, delta + rabi)."""
    lo, hi = breakdown_bounds(delta_mhz, rabi_mhz)
    v = np.array([r.v_mhz for r in rows])
    gamma = np.array([r.gamma_per_us for r in rows])
    omega = np.array([r.omega_mhz for r in rows])
    in_window = (v > lo) & (v < hi)
    damped = gamma > threshold * omega
    finite = np.isfinite(gamma)
    outside = gamma[~in_window & finite]
    inside = gamma[in_window & finite]
    nan = float("nan")
    return BreakdownSummary(
        (lo, hi), v, in_window, damped,
        float(np.median(outside)) if outside.size else nan,
        float(np.median(inside)) if inside.size else nan,
        float(np.max(inside)) if inside.size else nan,
    )


@dataclass
class BreakdownMap:
    rabi_mhz: np.ndarray
    v_mhz: np.ndarray
    omega_mhz: np.ndarray
    gamma_per_us: np.ndarray
    damped: np.ndarray


def breakdown_map(
    delta_mhz: float,
    rabi_grid: Sequence[float],
    v_grid: Sequence[float],
    threshold: float = BREAKDOWN_RATIO,
    workers: int = 1,
    **scan_kwargs,
) -> BreakdownMap:
    """Fitted (omega, gamma) over a (rabi, V) grid; rows follow rabi_grid."""
    omega = np.full((len(rabi_grid), len(v_grid)), np.nan)
    gamma = np.full_like(omega, np.nan)
    for i, rabi in enumerate(rabi_grid):
        rows = frequency_vs_interaction_scan(delta_mhz, rabi, v_grid, workers=workers, **scan_kwargs)
        omega[i] = [r.omega_mhz for r in rows]
        gamma[i] = [r.gamma_per_us for r in rows]
        logger.info(f"Breakdown map row rabi={rabi} MHz done")
    with np.errstate(invalid="ignore"):
        damped = gamma > threshold * omega
    return BreakdownMap(np.asarray(rabi_grid, float), np.asarray(v_grid, float), omega, gamma, damped)


@dataclass
class DecayRow:
    v_mhz: float
    beta_per_us2: float
    beta_err: float
    omega_rad_per_us: float
    omega_err: float
    window_us: float
    converged: bool
    message: str = ""

    @property
    def beta_ratio(self) -> float:
        """beta / (omega^2 / 4); one for a pair population following cos^2(omega t / 2)."""
        if not self.omega_rad_per_us:
            return float("nan")
        return self.beta_per_us2 / (self.omega_rad_per_us ** 2 / 4.0)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "V_mhz": self.v_mhz,
            "beta_per_us2": self.beta_per_us2,
            "beta_err": self.beta_err,
            "omega_rad_per_us": self.omega_rad_per_us,
            "omega_err": self.omega_err,
            "window_us": self.window_us,
            "beta_ratio": self.beta_ratio,
            "converged": self.converged,
            "message": self.message,
        }


@dataclass
class DecayScan:
    rows: List[DecayRow]
    exponent: Optional[PowerLawFit]
    omega_line: Optional[LineFit]

    def as_dict(self) -> Dict[str, Any]:
        return {
            "rows": [r.as_dict() for r in self.rows],
            "exponent": vars(self.exponent) if self.exponent else None,
            "omega_line": vars(self.omega_line) if self.omega_line else None,
        }


def decay_window(times, population, threshold: float = DECAY_THRESHOLD) -> int:
    """Number of leading samples up to and including the first one below threshold."""
    below = np.nonzero(np.asarray(population) < threshold)[0]
    if not below.size:
        logger.warning(f"Population never drops below {threshold}; fitting the whole series")
        return len(population)
    return int(below[0]) + 1


def gaussian_decay_scan(
    v_grid: Sequence[float] = (0.2, 0.4, 0.6, 0.8, 1.0),
    delta_mhz: float = 5.0,
    rabi_mhz: float = 0.9,
    sites: Sequence[int] = tuple(range(-4, 5)),
    t_final_us: float = 40.0,
    threshold: float = DECAY_THRESHOLD,
    tol: float = DEFAULT_TOL,
    table: Optional[Dict[FrozenSet[int], float]] = None,
    workers: int = 1,
) -> DecayScan:
    """
    Decay of P_00 under bichromatic driving versus interaction strength.

    P_00 is sampled stroboscopically, then a Gaussian a + b exp(-beta t^2) and
    a cosine a + b cos(omega t) are fitted up to its first drop below
    threshold. Returns the log-log slope of beta(V) and a line fit of omega(V).
    """
    spec = LatticeSpec.chain(sites, rabi_mhz, 0.0, Drive("bichromatic", delta_mhz))
    base = InteractionSpec.from_table(0.0, table)
    psi0 = QuantumState.pair(spec.sites, 0, 0)

    def point(v: float) -> DecayRow:
        H = build_pair_hamiltonian(spec, base.with_strength(v))
        times = stroboscopic_grid(H.period, t_final_us)
        p00 = pair_state_population(evolve(H, psi0, times, tol))
        n = decay_window(times, p00, threshold)
        gaussian = fit_gaussian_decay(times[:n], p00[:n], flat_tol=max(FLAT_TOL, tol))
        if gaussian["beta"] == 0.0:
            nan = float("nan")
            return DecayRow(float(v), 0.0, 0.0, 0.0, nan, float(times[n - 1]), True, gaussian.message)
        cosine = fit_cosine(times[:n], p00[:n])
        return DecayRow(
            float(v), gaussian["beta"], gaussian.errors["beta"], cosine["omega"], cosine.errors["omega"],
            float(times[n - 1]), gaussian.converged and cosine.converged,
        )

    rows = []
    for outcome in map_points(point, list(v_grid), workers, "V point"):
        if outcome.ok:
            rows.append(outcome.value)
        else:
            nan = float("nan")
            rows.append(DecayRow(float(outcome.point), nan, nan, nan, nan, nan, False, outcome.error))

    usable = [r for r in rows if r.v_mhz > 0 and r.beta_per_us2 > 0 and np.isfinite(r.beta_per_us2)]
    exponent = omega_line = None
    if len(usable) >= 3:
        exponent = fit_power_law([r.v_mhz for r in usable], [r.beta_per_us2 for r in usable])
        omega_line = fit_line([r.v_mhz for r in usable], [r.omega_rad_per_us for r in usable])
        logger.info(f"beta ~ V^{exponent.exponent:.3f}, omega(V) linear R^2 = {omega_line.r_squared:.4f}")
    return DecayScan(rows, exponent, omega_line)


@dataclass
class HoppingRow:
    v_mhz: float
    rate_mhz: float
    rate_err: float
    predicted_mhz: float
    converged: bool
    message: str = ""

    @property
    def deviation(self) -> float:
        """Relative deviation of the simulated rate from the second-order prediction."""
        if not self.predicted_mhz:
            return float("nan")
        return (self.rate_mhz - self.predicted_mhz) / self.predicted_mhz

    def as_dict(self) -> Dict[str, Any]:
        return {
            "V_mhz": self.v_mhz,
            "rate_mhz": self.rate_mhz,
            "rate_err": self.rate_err,
            "predicted_mhz": self.predicted_mhz,
            "deviation": self.deviation,
            "converged": self.converged,
            "message": self.message,
        }


def pair_hopping_scan(
    v_grid: Sequence[float],
    rabi_mhz: float = 1.92,
    delta_mhz: float = 7.2,
    sites: Sequence[int] = (0, 1),
    cycles: float = 2.5,
    tol: float = DEFAULT_TOL,
    table: Optional[Dict[FrozenSet[int], float]] = None,
    workers: int = 1,
) -> List[HoppingRow]:
    """
    Simulated |0,0> <-> |1,1> hopping rate under bichromatic driving, against pair_hopping_rate.

    Each V is run stroboscopically for `cycles` periods of the predicted
    rate and P_00 is fitted with the damped cos^2 model, whose frequency is
    the hopping rate.
    """
    spec = LatticeSpec.chain(sites, rabi_mhz, 0.0, Drive("bichromatic", delta_mhz))
    base = InteractionSpec.from_table(0.0, table)
    psi0 = QuantumState.pair(spec.sites, sites[0], sites[0])

    def point(v: float) -> HoppingRow:
        predicted = pair_hopping_rate(v, rabi_mhz, delta_mhz)
        if predicted == 0:
            return HoppingRow(float(v), 0.0, 0.0, 0.0, True, "no interaction")
        H = build_pair_hamiltonian(spec, base.with_strength(v))
        times = stroboscopic_grid(H.period, cycles / predicted)
        p00 = pair_state_population(evolve(H, psi0, times, tol))
        fit = fit_damped_sine(times, p00)
        return HoppingRow(float(v), fit["omega"], fit.errors["omega"], predicted, fit.converged, fit.message)

    rows = []
    for outcome in map_points(point, list(v_grid), workers, "V point"):
        if outcome.ok:
            rows.append(outcome.value)
        else:
            nan = float("nan")
            rows.append(HoppingRow(float(outcome.point), nan, nan, nan, False, outcome.error))
    return rows
