"""
Plain CSV and JSON outputs.

Every file is written to a temporary sibling and moved into place, so a
reader never sees a half-written table. Floats are written with repr, which
makes reruns of the same configuration byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence

import numpy as np

from .observables import CorrelationSnapshot, ObservableSeries
from .propagate import StateTrajectory
from .utils.logging import get_logger

logger = get_logger("export")


def _format(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return "" if value is None else str(value)


def _json_default(value: Any):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def atomic_write(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, temp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(temp, path)
    except BaseException:
        if os.path.exists(temp):
            os.unlink(temp)
        raise
    logger.debug(f"Wrote {path}")
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format(v) for v in row])
    return atomic_write(path, buffer.getvalue())


def write_records(path: Path, records: Sequence[Mapping[str, Any]], columns: Sequence[str] = ()) -> Path:
    """Rows of dictionaries; columns default to the keys of the first record."""
    columns = list(columns) or (list(records[0].keys()) if records else [])
    return write_csv(path, columns, ([r.get(c) for c in columns] for r in records))


def write_json(path: Path, data: Any) -> Path:
    text = json.dumps(data, indent=2, ensure_ascii=False, default=_json_default)
    return atomic_write(path, text + "\n")


def read_json(path: Path) -> Any:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def basis_labels(trajectory: StateTrajectory) -> List[str]:
    if trajectory.basis == "single":
        return [f"P_{j}" for j in trajectory.sites]
    return [f"P_{i}_{j}" for i in trajectory.sites for j in trajectory.sites]


def write_trajectory(path: Path, trajectory: StateTrajectory) -> List[Path]:
    """Basis-state probabilities per time, plus a JSON sidecar with the solver provenance."""
    path = Path(path)
    probabilities = trajectory.probabilities
    rows = ([t, *p] for t, p in zip(trajectory.times, probabilities))
    csv_path = write_csv(path, ["t_us", *basis_labels(trajectory)], rows)
    sidecar = write_json(path.with_suffix(".json"), {
        "basis": trajectory.basis,
        "sites": list(trajectory.sites),
        "n_times": len(trajectory),
        "provenance": trajectory.provenance,
    })
    return [csv_path, sidecar]


def observable_columns(series: ObservableSeries) -> Dict[str, np.ndarray]:
    """Flatten an ObservableSeries to named 1-D columns (P_site_j, P_A_j, P_B_j, lambda, P00)."""
    columns = {}
    for name, values in series.series.items():
        if values.ndim == 1:
            columns[name] = values
            continue
        prefix = "P_site" if name == "P_sites" else name
        for k, site in enumerate(series.sites):
            columns[f"{prefix}_{site}"] = values[:, k]
    return columns


def write_observables(path: Path, series: ObservableSeries) -> Path:
    columns = observable_columns(series)
    rows = ([t, *(c[k] for c in columns.values())] for k, t in enumerate(series.times))
    return write_csv(path, ["t_us", *columns.keys()], rows)


def write_correlations(directory: Path, snapshots: Sequence[CorrelationSnapshot]) -> List[Path]:
    """One square C_ij table per snapshot and a long-format table of all of them."""
    directory = Path(directory)
    written = []
    long_rows = []
    for snap in snapshots:
        header = ["i\\j", *(str(s) for s in snap.sites)]
        rows = ([i, *snap.matrix[k]] for k, i in enumerate(snap.sites))
        written.append(write_csv(directory / f"correlations_t{snap.time_us:.4f}.csv", header, rows))
        for a, i in enumerate(snap.sites):
            for b, j in enumerate(snap.sites):
                long_rows.append([snap.time_us, i, j, snap.matrix[a, b]])
    if snapshots:
        written.append(write_csv(directory / "correlations_long.csv", ["t_us", "i", "j", "value"], long_rows))
    return written


def write_manifest(directory: Path, manifest: Mapping[str, Any]) -> Path:
    return write_json(Path(directory) / "manifest.json", dict(manifest))
