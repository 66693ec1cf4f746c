"""Utility modules for synlattice."""

from .logging import setup_logging, get_logger
from .validation import validate_scenario_config, validate_lattice_config, ValidationError

__all__ = [
    "setup_logging",
    "get_logger",
    "validate_scenario_config",
    "validate_lattice_config",
    "ValidationError",
]
