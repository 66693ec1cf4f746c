"""
synlattice - quantum walks, Bloch oscillations and pair dynamics on synthetic lattices.
"""
__version__ = "0.1.0"

from .lattice import (
    Drive,
    InteractionSpec,
    LabFrameSpec,
    LatticeSpec,
    Link,
    build_lab_frame_hamiltonian,
    build_pair_hamiltonian,
    build_single_hamiltonian,
    rotating_frame_reduce,
)
from .propagate import ConvergenceError, QuantumState, StateTrajectory, evolve
from .observables import observable_series, pair_correlations, refocusing_time
from .analysis import (
    FitError,
    calibrate_flux,
    fit_bloch_oscillation,
    fit_cosine,
    fit_damped_sine,
    fit_gaussian_decay,
    frequency_vs_interaction_scan,
    gap_approx,
    gap_exact,
    pair_hopping_rate,
)
from .spam import SpamModel
from .scenarios import get_scenario, list_scenarios
from .runner import RunSettings, run_scenario, sweep
from .utils.validation import ValidationError

__all__ = [
    "Drive",
    "InteractionSpec",
    "LabFrameSpec",
    "LatticeSpec",
    "Link",
    "build_lab_frame_hamiltonian",
    "build_pair_hamiltonian",
    "build_single_hamiltonian",
    "rotating_frame_reduce",
    "ConvergenceError",
    "QuantumState",
    "StateTrajectory",
    "evolve",
    "observable_series",
    "pair_correlations",
    "refocusing_time",
    "FitError",
    "calibrate_flux",
    "fit_bloch_oscillation",
    "fit_cosine",
    "fit_damped_sine",
    "fit_gaussian_decay",
    "frequency_vs_interaction_scan",
    "gap_approx",
    "gap_exact",
    "pair_hopping_rate",
    "SpamModel",
    "get_scenario",
    "list_scenarios",
    "RunSettings",
    "run_scenario",
    "sweep",
    "ValidationError",
]
