"""Physical quantities derived from state trajectories."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .propagate import StateTrajectory
from .utils.logging import get_logger
from .utils.validation import ValidationError

logger = get_logger("observables")

PROBABILITY_SLACK = 1e-9


class NoRefocusingError(ValueError):
    """An untilted ring has no Bloch refocusing time."""


def _require_basis(traj: StateTrajectory, basis: str):
    if traj.basis != basis:
        raise ValidationError(f"Expected a {basis}-particle trajectory, got {traj.basis}")


def site_populations(traj: StateTrajectory) -> np.ndarray:
    """P_j(t) = |<j|psi(t)>|^2, shape (n_times, n_sites)."""
    _require_basis(traj, "single")
    return traj.probabilities


def wavepacket_width(traj: StateTrajectory) -> np.ndarray:
    """lambda(t) = sum_j |j| P_j(t)."""
    populations = site_populations(traj)
    return populations @ np.abs(np.asarray(traj.sites, dtype=float))


def _joint(traj: StateTrajectory) -> np.ndarray:
    _require_basis(traj, "pair")
    n = len(traj.sites)
    return traj.probabilities.reshape(len(traj), n, n)


def pair_marginals(traj: StateTrajectory) -> Tuple[np.ndarray, np.ndarray]:
    """Site populations of atom A and atom B separately."""
    joint = _joint(traj)
    return joint.sum(axis=2), joint.sum(axis=1)


def pair_site_populations(traj: StateTrajectory) -> np.ndarray:
    """P_i = (<n_{i,A} (x) I_B> + <I_A (x) n_{i,B}>) / 2."""
    atom_a, atom_b = pair_marginals(traj)
    return 0.5 * (atom_a + atom_b)


def pair_state_population(traj: StateTrajectory, i: int = 0, j: int = 0) -> np.ndarray:
    """P_{|i,j>}(t); the default is P_00."""
    joint = _joint(traj)
    sites = list(traj.sites)
    return joint[:, sites.index(i), sites.index(j)]


@dataclass(frozen=True, eq=False)
class CorrelationSnapshot:
    """C_ij at one grid time; exact is False when the requested time was off grid."""

    requested_us: float
    time_us: float
    exact: bool
    matrix: np.ndarray
    sites: Tuple[int, ...]

    def diagonal_weight(self) -> float:
        return float(np.trace(self.matrix))

    def antidiagonal_weight(self) -> float:
        """Sum of C_{i,-i} over sites whose mirror image is also in the lattice."""
        index = {s: k for k, s in enumerate(self.sites)}
        return float(sum(self.matrix[index[s], index[-s]] for s in self.sites if -s in index))


def pair_correlations(traj: StateTrajectory, times: Sequence[float]) -> List[CorrelationSnapshot]:
    """
    C_ij = |<i,j|psi>|^2 at the grid points nearest to the requested times.

    No interpolation is done; an off-grid request returns the nearest
    sample with exact=False.
    """
    joint = _joint(traj)
    snapshots = []
    for t in times:
        k = int(np.argmin(np.abs(traj.times - t)))
        exact = bool(np.isclose(traj.times[k], t, rtol=0.0, atol=1e-12))
        if not exact:
            logger.warning(f"Correlation requested at t={t} us, using nearest grid time {traj.times[k]}")
        snapshots.append(CorrelationSnapshot(float(t), float(traj.times[k]), exact, joint[k].copy(), traj.sites))
    return snapshots


def refocusing_time(delta_mhz: float) -> float:
    """t_r such that the accumulated phase 2 pi Delta t_r equals 2 pi, i.e. t_r = 1 / Delta (us)."""
    if delta_mhz == 0:
        raise NoRefocusingError("Zero tilt: the ring never refocuses through Bloch oscillation")
    if delta_mhz < 0 or not np.isfinite(delta_mhz):
        raise ValidationError(f"Tilt must be positive and finite, got {delta_mhz}")
    return 1.0 / delta_mhz


@dataclass(frozen=True, eq=False)
class ObservableSeries:
    """Named observable time series on a shared time grid, plus optional C_ij snapshots."""

    times: np.ndarray
    sites: Tuple[int, ...]
    series: Dict[str, np.ndarray] = field(default_factory=dict)
    correlations: Tuple[CorrelationSnapshot, ...] = ()

    def check(self, tol: float) -> List[str]:
        """Invariant violations (probabilities out of range, populations not summing to one)."""
        problems = []
        for name, values in self.series.items():
            if name.startswith("P") and (values.min() < -PROBABILITY_SLACK or values.max() > 1 + PROBABILITY_SLACK):
                problems.append(f"{name} leaves [0, 1]")
        if "P_sites" in self.series:
            drift = np.max(np.abs(self.series["P_sites"].sum(axis=1) - 1.0))
            if drift > tol:
                problems.append(f"site populations sum to 1 only within {drift:.2e}")
        for snap in self.correlations:
            drift = abs(snap.matrix.sum() - 1.0)
            if drift > tol:
                problems.append(f"C_ij at t={snap.time_us} sums to 1 only within {drift:.2e}")
        return problems


SINGLE_OBSERVABLES = ("P_sites", "lambda")
PAIR_OBSERVABLES = ("P_sites", "P00", "P_A", "P_B")


def observable_series(
    traj: StateTrajectory,
    names: Sequence[str] = (),
    correlation_times: Sequence[float] = (),
) -> ObservableSeries:
    """Collect the requested observables (all available ones by default)."""
    available = SINGLE_OBSERVABLES if traj.basis == "single" else PAIR_OBSERVABLES
    names = tuple(names) or available
    unknown = [n for n in names if n not in available]
    if unknown:
        raise ValidationError(f"Unknown {traj.basis}-particle observables: {', '.join(unknown)}")

    series = {}
    if traj.basis == "single":
        if "P_sites" in names:
            series["P_sites"] = site_populations(traj)
        if "lambda" in names:
            series["lambda"] = wavepacket_width(traj)
        correlations = ()
    else:
        atom_a, atom_b = pair_marginals(traj)
        if "P_sites" in names:
            series["P_sites"] = 0.5 * (atom_a + atom_b)
        if "P_A" in names:
            series["P_A"] = atom_a
        if "P_B" in names:
            series["P_B"] = atom_b
        if "P00" in names:
            series["P00"] = pair_state_population(traj)
        correlations = tuple(pair_correlations(traj, correlation_times))
    return ObservableSeries(traj.times, traj.sites, series, correlations)
