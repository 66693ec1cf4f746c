"""
Time evolution of lattice states.

Static generators are propagated exactly through their eigendecomposition.
Time-dependent generators use exponential stepping: the second-order
midpoint rule by default, or the fourth-order two-node Magnus rule. Every
step is an exact unitary, so norm drift always means a bug.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh, schur

from .lattice import TWO_PI, HamiltonianMatrix, is_hermitian
from .utils.logging import get_logger
from .utils.validation import ValidationError

logger = get_logger("propagate")

DEFAULT_TOL = 1e-8
DEFAULT_MAX_STEPS = 2 ** 20
SCHEMES = ("midpoint", "magnus4")
NORM_TOL = 1e-10
# initial internal steps per unit of (norm bound + fastest tone) * time
STEPS_PER_CYCLE = 8
_GL_OFFSET = math.sqrt(3.0) / 6.0


class ConvergenceError(RuntimeError):
    """The adaptive stepper ran out of its step budget before reaching the tolerance."""

    def __init__(self, message: str, achieved: float, steps: int):
        super().__init__(message)
        self.achieved = achieved
        self.steps = steps


@dataclass(frozen=True, eq=False)
class QuantumState:
    amplitudes: np.ndarray
    sites: Tuple[int, ...]
    basis: str = "single"

    def __post_init__(self):
        amplitudes = np.array(self.amplitudes, dtype=complex)
        expected = len(self.sites) ** (2 if self.basis == "pair" else 1)
        if amplitudes.shape != (expected,):
            raise ValidationError(f"State over {self.basis} basis needs {expected} amplitudes")
        norm = np.linalg.norm(amplitudes)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValidationError(f"State is not normalized (norm {norm:.12f})")
        amplitudes.flags.writeable = False
        object.__setattr__(self, "amplitudes", amplitudes)
        object.__setattr__(self, "sites", tuple(self.sites))

    @classmethod
    def site(cls, sites: Sequence[int], j: int) -> "QuantumState":
        sites = tuple(sites)
        amplitudes = np.zeros(len(sites), dtype=complex)
        amplitudes[sites.index(j)] = 1.0
        return cls(amplitudes, sites, "single")

    @classmethod
    def pair(cls, sites: Sequence[int], i: int, j: int) -> "QuantumState":
        """Product state |i>_A |j>_B."""
        sites = tuple(sites)
        n = len(sites)
        amplitudes = np.zeros(n * n, dtype=complex)
        amplitudes[sites.index(i) * n + sites.index(j)] = 1.0
        return cls(amplitudes, sites, "pair")

    @classmethod
    def normalized(cls, amplitudes, sites: Sequence[int], basis: str = "single") -> "QuantumState":
        amplitudes = np.asarray(amplitudes, dtype=complex)
        return cls(amplitudes / np.linalg.norm(amplitudes), tuple(sites), basis)


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    """States sampled on a strictly monotone time grid (us), row k at times[k]."""

    times: np.ndarray
    states: np.ndarray
    sites: Tuple[int, ...]
    basis: str
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        states = np.array(self.states, dtype=complex)
        times.flags.writeable = False
        states.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    def __len__(self) -> int:
        return len(self.times)

    def state(self, k: int) -> QuantumState:
        return QuantumState.normalized(self.states[k], self.sites, self.basis)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.states) ** 2

    @property
    def norm_error(self) -> float:
        return float(np.max(np.abs(1.0 - self.probabilities.sum(axis=1))))


def _check_inputs(H: HamiltonianMatrix, psi0: QuantumState, times) -> np.ndarray:
    if H.basis != psi0.basis or tuple(H.sites) != tuple(psi0.sites):
        raise ValidationError(
            f"State basis ({psi0.basis}, sites {psi0.sites}) does not match "
            f"Hamiltonian ({H.basis}, sites {H.sites})"
        )
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.ndim != 1 or not np.all(np.isfinite(times)):
        raise ValidationError("Time grid must be a finite one-dimensional array")
    steps = np.diff(times)
    if len(times) > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
        raise ValidationError("Time grid must be strictly monotone")
    return times


def evolve_static(H: HamiltonianMatrix, psi0: QuantumState, times) -> StateTrajectory:
    """psi(t) = sum_n exp(-i 2 pi E_n (t - t0)) <n|psi0> |n>, with t0 = times[0]."""
    if not H.is_static:
        raise ValidationError("evolve_static needs a generator without modulated terms")
    if not is_hermitian(H.static):
        raise ValidationError("Hamiltonian is not Hermitian")
    times = _check_inputs(H, psi0, times)

    energies, vectors = eigh(H.static)
    coefficients = vectors.conj().T @ psi0.amplitudes
    phases = np.exp(-1j * TWO_PI * np.outer(times - times[0], energies))
    states = (phases * coefficients) @ vectors.T

    trajectory = StateTrajectory(
        times, states, H.sites, H.basis,
        {"solver": "eigh", "dim": H.dim},
    )
    trajectory.provenance["norm_error"] = trajectory.norm_error
    return trajectory


def _step_generator(H: HamiltonianMatrix, t: float, dt: float, scheme: str) -> np.ndarray:
    """Hermitian K with U(t + dt, t) = exp(-i 2 pi K dt)."""
    if scheme == "midpoint":
        return H.at(t + 0.5 * dt)
    h1 = H.at(t + (0.5 - _GL_OFFSET) * dt)
    h2 = H.at(t + (0.5 + _GL_OFFSET) * dt)
    commutator = h2 @ h1 - h1 @ h2
    return 0.5 * (h1 + h2) - 1j * (math.sqrt(3.0) * math.pi * dt / 6.0) * commutator


def _step_unitary(H: HamiltonianMatrix, t: float, dt: float, scheme: str) -> np.ndarray:
    energies, vectors = eigh(_step_generator(H, t, dt, scheme))
    return (vectors * np.exp(-1j * TWO_PI * energies * dt)) @ vectors.conj().T


def _propagate_fixed(
    H: HamiltonianMatrix,
    psi0: np.ndarray,
    times: np.ndarray,
    substeps: np.ndarray,
    scheme: str,
) -> np.ndarray:
    """Step psi0 (a vector, or a matrix of column vectors) across each output interval."""
    out = np.empty((len(times),) + psi0.shape, dtype=complex)
    psi = np.array(psi0, dtype=complex)
    out[0] = psi
    for k in range(len(times) - 1):
        n = int(substeps[k])
        dt = (times[k + 1] - times[k]) / n
        for s in range(n):
            psi = _step_unitary(H, times[k] + s * dt, dt, scheme) @ psi
        out[k + 1] = psi
    return out


def _initial_substeps(H: HamiltonianMatrix, times: np.ndarray) -> np.ndarray:
    rate = H.norm_bound() + H.max_tone_mhz
    dt0 = 1.0 / (STEPS_PER_CYCLE * max(rate, 1e-12))
    return np.maximum(1, np.ceil(np.abs(np.diff(times)) / dt0)).astype(int)


def _check_scheme(scheme: str):
    if scheme not in SCHEMES:
        raise ValidationError(f"Invalid scheme: {scheme}. Valid: {', '.join(SCHEMES)}")


def _refine(
    H: HamiltonianMatrix,
    psi0: np.ndarray,
    times: np.ndarray,
    tol: float,
    scheme: str,
    max_steps: int,
    measure,
) -> Tuple[np.ndarray, np.ndarray, float, List[Tuple[int, float]]]:
    """Halve the internal step until successive results agree to tol under measure."""
    substeps = _initial_substeps(H, times)
    previous = _propagate_fixed(H, psi0, times, substeps, scheme)
    history = []
    while True:
        substeps = substeps * 2
        total = int(substeps.sum())
        if total > max_steps:
            achieved = history[-1][1] if history else float("inf")
            raise ConvergenceError(
                f"Time-dependent solver needs more than {max_steps} steps "
                f"(last difference {achieved:.3e}, tolerance {tol:.1e})",
                achieved, total // 2,
            )
        current = _propagate_fixed(H, psi0, times, substeps, scheme)
        difference = measure(previous, current)
        history.append((total, difference))
        logger.debug(f"{scheme} refinement: {total} steps, difference {difference:.3e}")
        if difference < tol:
            return current, substeps, difference, history
        previous = current


def _population_difference(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(np.abs(a) ** 2 - np.abs(b) ** 2)))


def _operator_difference(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)))


def evolve_timedep(
    H: HamiltonianMatrix,
    psi0: QuantumState,
    times,
    tol: float = DEFAULT_TOL,
    scheme: str = "midpoint",
    max_steps: int = DEFAULT_MAX_STEPS,
) -> StateTrajectory:
    """
    Adaptive exponential stepping of a time-dependent generator.

    The internal step is halved until the largest population difference
    between two successive refinements is below tol at every output time.
    """
    if H.is_static:
        raise ValidationError("evolve_timedep needs a generator with modulated terms")
    if tol <= 0:
        raise ValidationError("Tolerance must be positive")
    _check_scheme(scheme)
    times = _check_inputs(H, psi0, times)

    states, substeps, achieved, history = _refine(
        H, psi0.amplitudes, times, tol, scheme, max_steps, _population_difference
    )
    trajectory = StateTrajectory(
        times, states, H.sites, H.basis,
        {
            "solver": "exponential",
            "scheme": scheme,
            "tol": tol,
            "total_steps": int(substeps.sum()),
            "max_step_us": float(np.max(np.abs(np.diff(times)) / substeps)) if len(times) > 1 else 0.0,
            "achieved_difference": achieved,
            "refinements": len(history),
        },
    )
    trajectory.provenance["norm_error"] = trajectory.norm_error
    logger.debug(f"evolve_timedep converged with {trajectory.provenance['total_steps']} steps")
    return trajectory


@dataclass(frozen=True, eq=False)
class FloquetPropagator:
    """One-period propagator U(T, 0) in Schur (eigen) form."""

    period: float
    eigenvalues: np.ndarray
    vectors: np.ndarray
    step_us: float
    scheme: str

    @property
    def quasienergies(self) -> np.ndarray:
        """Quasi-energies in MHz, folded into (-1/2T, 1/2T]."""
        eps = -np.angle(self.eigenvalues) / (TWO_PI * self.period)
        return np.sort(eps)

    def power(self, m: int, psi: np.ndarray) -> np.ndarray:
        return self.vectors @ (self.eigenvalues ** m * (self.vectors.conj().T @ psi))


def floquet_propagator(
    H: HamiltonianMatrix,
    tol: float = DEFAULT_TOL,
    scheme: str = "midpoint",
    period: Optional[float] = None,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> FloquetPropagator:
    period = period or H.period
    if period is None:
        raise ValidationError("Generator has no common modulation period")
    _check_scheme(scheme)
    grid = np.array([0.0, period])
    identity = np.eye(H.dim, dtype=complex)
    operators, substeps, _, _ = _refine(H, identity, grid, tol, scheme, max_steps, _operator_difference)
    u_period = operators[-1]
    triangular, vectors = schur(u_period, output="complex")
    eigenvalues = np.diag(triangular)
    eigenvalues = eigenvalues / np.abs(eigenvalues)
    return FloquetPropagator(period, eigenvalues, vectors, period / int(substeps[0]), scheme)


def floquet_quasienergies(H: HamiltonianMatrix, tol: float = DEFAULT_TOL) -> np.ndarray:
    return floquet_propagator(H, tol).quasienergies


def stroboscopic_grid(period: float, t_final: float) -> np.ndarray:
    """Integer multiples of the drive period up to t_final (inclusive)."""
    count = int(math.floor(t_final / period + 1e-9))
    return period * np.arange(count + 1)


def evolve_floquet(
    H: HamiltonianMatrix,
    psi0: QuantumState,
    times,
    tol: float = DEFAULT_TOL,
    scheme: str = "midpoint",
    period: Optional[float] = None,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> StateTrajectory:
    """
    Propagate a periodic generator as U(tau) U(T)^m psi0 for t = m T + tau.

    The in-period propagators U(tau) are refined together on one grid of
    distinct offsets until they agree to tol; stroboscopic grids need none.
    """
    times = _check_inputs(H, psi0, times)
    if np.any(times < 0):
        raise ValidationError("Floquet propagation starts at t = 0")
    floquet = floquet_propagator(H, tol, scheme, period, max_steps)
    T = floquet.period

    periods = np.floor(times / T + 1e-9).astype(int)
    taus = times - periods * T
    taus[taus < 1e-9 * T] = 0.0
    keys = np.round(taus, 12)

    offsets: Dict[float, np.ndarray] = {}
    offset_difference = 0.0
    distinct = np.unique(keys[keys > 0])
    if distinct.size:
        grid = np.concatenate(([0.0], distinct))
        operators, _, offset_difference, _ = _refine(
            H, np.eye(H.dim, dtype=complex), grid, tol, scheme, max_steps, _operator_difference
        )
        offsets = dict(zip(distinct.tolist(), operators[1:]))

    states = np.empty((len(times), H.dim), dtype=complex)
    for k, (m, key) in enumerate(zip(periods, keys)):
        psi = floquet.power(int(m), psi0.amplitudes)
        if key > 0:
            psi = offsets[float(key)] @ psi
        states[k] = psi

    trajectory = StateTrajectory(
        times, states, H.sites, H.basis,
        {
            "solver": "floquet",
            "scheme": scheme,
            "tol": tol,
            "period_us": T,
            "step_us": floquet.step_us,
            "offsets_stepped": len(offsets),
            "offset_difference": offset_difference,
        },
    )
    trajectory.provenance["norm_error"] = trajectory.norm_error
    return trajectory


def evolve(
    H: HamiltonianMatrix,
    psi0: QuantumState,
    times,
    tol: float = DEFAULT_TOL,
    scheme: str = "midpoint",
    floquet: bool = True,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> StateTrajectory:
    """Pick the cheapest exact-enough propagator for H."""
    if H.is_static:
        return evolve_static(H, psi0, times)
    if H.max_tone_mhz == 0:
        return evolve_static(H.static_limit(), psi0, times)
    times = np.asarray(times, dtype=float)
    if floquet and H.period is not None and times.size and times[0] == 0 and np.all(np.diff(times) > 0):
        return evolve_floquet(H, psi0, times, tol, scheme, max_steps=max_steps)
    return evolve_timedep(H, psi0, times, tol, scheme, max_steps)


@dataclass
class ConvergenceReport:
    scheme: str
    tolerances: List[float]
    total_steps: List[int]
    differences: List[float]
    ladder_steps: List[int]
    ladder_errors: List[float]
    orders: List[float]
    exact: bool

    @property
    def observed_order(self) -> float:
        finite = [p for p in self.orders if np.isfinite(p)]
        return float(np.median(finite)) if finite else float("nan")

    def as_dict(self) -> Dict[str, Any]:
        return {
            "scheme": self.scheme,
            "tolerances": self.tolerances,
            "total_steps": self.total_steps,
            "differences": self.differences,
            "ladder_steps": self.ladder_steps,
            "ladder_errors": self.ladder_errors,
            "orders": self.orders,
            "observed_order": self.observed_order,
            "exact": self.exact,
        }


def convergence_probe(
    H: HamiltonianMatrix,
    psi0: QuantumState,
    t_final: float,
    tolerances: Sequence[float] = (1e-4, 1e-5, 1e-6),
    scheme: str = "midpoint",
    ladder: int = 4,
    base_steps: Optional[int] = None,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> ConvergenceReport:
    """
    Run the adaptive solver at a ladder of tolerances, then estimate the
    order of accuracy from fixed-step runs at n, 2n, 4n, ... steps:
    order = log2(|P_n - P_2n| / |P_2n - P_4n|).
    """
    _check_scheme(scheme)
    times = np.array([0.0, t_final])
    total_steps, differences = [], []
    for tol in tolerances:
        trajectory = evolve_timedep(H, psi0, times, tol, scheme, max_steps)
        total_steps.append(trajectory.provenance["total_steps"])
        differences.append(trajectory.provenance["achieved_difference"])

    n = base_steps or int(_initial_substeps(H, times)[0])
    ladder_steps = [n * 2 ** k for k in range(ladder + 1)]
    finals = [
        _propagate_fixed(H, psi0.amplitudes, times, np.array([steps]), scheme)[-1]
        for steps in ladder_steps
    ]
    errors = [_population_difference(a, b) for a, b in zip(finals, finals[1:])]
    exact = max(errors) < 1e-13
    orders = []
    for e1, e2 in zip(errors, errors[1:]):
        orders.append(math.log2(e1 / e2) if e2 > 1e-14 and e1 > 1e-14 else float("nan"))
    report = ConvergenceReport(
        scheme, list(tolerances), total_steps, differences,
        ladder_steps[1:], errors, orders, exact,
    )
    logger.info(f"Convergence probe ({scheme}): observed order {report.observed_order:.2f}")
    return report
