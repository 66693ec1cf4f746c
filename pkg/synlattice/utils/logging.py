"""Logging setup for the CLI, plus per-run log files and step timing."""

import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional

PACKAGE = "synlattice"
DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
RUN_LOG_NAME = "run.log"


def setup_logging(
    level: str = "INFO",
    log_file: Optional[Path] = None,
    format_string: Optional[str] = None,
    capture_warnings: bool = True,
) -> logging.Logger:
    """
    Configure the root logger for a CLI invocation.

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional path to a log file, written next to the console output
        format_string: Optional custom format string
        capture_warnings: Route numpy/scipy RuntimeWarning and OptimizeWarning
            messages through logging instead of stderr

    Returns:
        The package logger
    """
    handlers = [logging.StreamHandler(sys.stdout)]
    if log_file:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))

    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format=format_string or DEFAULT_FORMAT,
        handlers=handlers,
        datefmt=DATE_FORMAT,
        force=True,
    )
    logging.captureWarnings(capture_warnings)

    logger = logging.getLogger(PACKAGE)
    logger.debug(f"Logging initialized at level {level.upper()}")
    return logger


def get_logger(name: str) -> logging.Logger:
    """Logger for one synlattice module, named 'synlattice.<name>'."""
    return logging.getLogger(f"{PACKAGE}.{name}")


@contextmanager
def run_log(out_dir: Path) -> Iterator[Path]:
    """
    Copy every synlattice record emitted inside the block to out_dir/run.log.

    Sweep worker threads log through the same package logger, so their
    per-point messages land in the file too. The file sees the same level
    as the console.
    """
    path = Path(out_dir) / RUN_LOG_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter(DEFAULT_FORMAT, DATE_FORMAT))
    package = logging.getLogger(PACKAGE)
    package.addHandler(handler)
    try:
        yield path
    finally:
        package.removeHandler(handler)
        handler.close()


@contextmanager
def timed(logger: logging.Logger, label: str) -> Iterator[None]:
    start = time.perf_counter()
    try:
        yield
    finally:
        logger.info(f"{label} took {time.perf_counter() - start:.2f} s")
