"""Thread-pool fan-out for independent grid points."""
from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Any, Callable, Generic, List, Optional, Sequence, TypeVar

from .utils.logging import get_logger

logger = get_logger("parallel")

T = TypeVar("T")


@dataclass
class PointOutcome(Generic[T]):
    index: int
    point: Any
    value: Optional[T] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def map_points(
    fn: Callable[[Any], T],
    points: Sequence[Any],
    workers: int = 1,
    label: str = "point",
) -> List[PointOutcome[T]]:
    """
    Evaluate fn over points concurrently; failures are recorded per point, never raised.

    Results come back in input order regardless of completion order.
    """
    outcomes: List[Optional[PointOutcome[T]]] = [None] * len(points)
    lock = threading.Lock()

    def run_point(index: int, point: Any):
        try:
            value = fn(point)
            outcome = PointOutcome(index, point, value)
            logger.debug(f"{label} {point} done")
        except Exception as e:
            outcome = PointOutcome(index, point, error=f"{type(e).__name__}: {e}")
            logger.warning(f"{label} {point} failed: {e}")
        with lock:
            outcomes[index] = outcome

    workers = max(1, min(int(workers), len(points) or 1))
    logger.info(f"Running {len(points)} {label}(s) on {workers} worker(s)")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(run_point, k, p) for k, p in enumerate(points)]
        for future in as_completed(futures):
            future.result()

    failed = sum(1 for o in outcomes if o is not None and not o.ok)
    if failed:
        logger.warning(f"{failed} of {len(points)} {label}(s) failed")
    return [o for o in outcomes if o is not None]
