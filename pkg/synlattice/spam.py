"""
State-preparation-and-measurement contrast model.

Raw populations live between a baseline P_l and a ceiling P_u:
P_bare = P_l + (P_u - P_l) * P_ideal. Renormalization inverts this without
clipping, so statistical excursions outside [0, 1] stay visible.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .utils.logging import get_logger
from .utils.validation import ValidationError

logger = get_logger("spam")

ArrayLike = Union[float, Sequence[float], np.ndarray]


class Renormalized(NamedTuple):
    values: np.ndarray
    out_of_range: np.ndarray

    @property
    def flagged(self) -> bool:
        return bool(np.any(self.out_of_range))


@dataclass(frozen=True)
class SpamModel:
    upper: float = 0.93
    lower: float = 0.32

    def __post_init__(self):
        if self.upper == self.lower:
            raise ValidationError("SPAM ceiling and baseline coincide; the map is not invertible")
        if not (0.0 <= self.lower < self.upper <= 1.0):
            raise ValidationError(
                f"SPAM levels must satisfy 0 <= P_l < P_u <= 1, got P_l={self.lower}, P_u={self.upper}"
            )

    @classmethod
    def populations(cls) -> "SpamModel":
        """Single-atom and pair-averaged site populations."""
        return cls(0.93, 0.32)

    @classmethod
    def pair_state(cls) -> "SpamModel":
        """Joint pair-state populations such as P_00."""
        return cls(0.86, 0.32)

    @property
    def contrast(self) -> float:
        return self.upper - self.lower

    def forward(self, p_ideal: ArrayLike) -> np.ndarray:
        p_ideal = np.asarray(p_ideal, dtype=float)
        if not np.all(np.isfinite(p_ideal)):
            raise ValidationError("Populations must be finite")
        return self.lower + self.contrast * p_ideal

    def renormalize(self, p_bare: ArrayLike) -> Renormalized:
        p_bare = np.asarray(p_bare, dtype=float)
        if not np.all(np.isfinite(p_bare)):
            raise ValidationError("Populations must be finite")
        values = (p_bare - self.lower) / self.contrast
        out_of_range = (values < 0.0) | (values > 1.0)
        if np.any(out_of_range):
            logger.warning(f"{int(np.sum(out_of_range))} renormalized value(s) fall outside [0, 1]")
        return Renormalized(values, out_of_range)


def apply_to_table(
    model: SpamModel,
    source: Path,
    destination: Path,
    columns: Optional[Sequence[str]] = None,
    inverse: bool = True,
) -> int:
    """
    Renormalize (or, with inverse=False, degrade) population columns of a CSV table.

    Every column except t_us is treated as a population unless columns is given.
    Returns the number of out-of-range values produced.
    """
    with open(source, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        fieldnames = list(reader.fieldnames or [])
        rows = list(reader)
    columns = list(columns) if columns else [c for c in fieldnames if c != "t_us"]
    missing = [c for c in columns if c not in fieldnames]
    if missing:
        raise ValidationError(f"{source}: missing columns {', '.join(missing)}")

    flagged = 0
    for column in columns:
        values = np.array([float(row[column]) for row in rows])
        if inverse:
            result = model.renormalize(values)
            converted, flagged = result.values, flagged + int(np.sum(result.out_of_range))
        else:
            converted = model.forward(values)
        for row, value in zip(rows, converted):
            row[column] = repr(float(value))

    destination = Path(destination)
    destination.parent.mkdir(parents=True, exist_ok=True)
    with open(destination, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    logger.info(f"Applied SPAM model to {len(columns)} column(s) of {source} -> {destination}")
    return flagged
