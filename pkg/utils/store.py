"""
Persistence for traces, snapshots, geodesic paths and reports.

Traces are CSV with a fixed header; everything else is JSON with sorted keys
so identical runs produce byte-identical files.
"""

import csv
import io
import json
import logging
import math
from dataclasses import asdict
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from utils.diagnostics import TRACE_COLUMNS, DiagnosticsRecord
from utils.errors import ConfigurationError
from utils.grid import RadialGrid

logger = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1


# ── Traces ───────────────────────────────────────────────────────────────────

def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def trace_csv_text(records: Sequence[DiagnosticsRecord], failed_at: float | None = None) -> str:
    """CSV text of a trace; a failed run ends with a marker row holding `error` in every column but t."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(TRACE_COLUMNS), lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow({k: _cell(v) for k, v in asdict(rec).items()})
    if failed_at is not None:
        marker = {k: "error" for k in TRACE_COLUMNS}
        marker["t"] = _cell(float(failed_at))
        writer.writerow(marker)
    return buf.getvalue()


def write_trace_csv(path: str | Path, records: Sequence[DiagnosticsRecord], failed_at: float | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(trace_csv_text(records, failed_at), encoding="utf-8")
    logger.info("wrote %s (%d rows)", path, len(records))
    return path


def read_trace_csv(path: str | Path) -> list[dict[str, float | str | None]]:
    """Rows as dicts; numbers parsed, empty cells as None, marker cells kept as strings."""
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            row: dict[str, float | str | None] = {}
            for key, cell in raw.items():
                if cell == "":
                    row[key] = None
                else:
                    try:
                        row[key] = float(cell)
                    except ValueError:
                        row[key] = cell
            rows.append(row)
    return rows


# ── JSON ─────────────────────────────────────────────────────────────────────

def _clean(obj: Any) -> Any:
    """Make a value JSON-safe: arrays to lists, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(float(v)) for v in obj]
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def json_text(obj: Any) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_json(path: str | Path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json_text(obj), encoding="utf-8")
    logger.info("wrote %s", path)
    return path


# ── Snapshots ────────────────────────────────────────────────────────────────

def snapshot_payload(grid: RadialGrid, t: float, values: np.ndarray) -> dict:
    return {"version": SNAPSHOT_VERSION, "n": grid.n, "r_max": grid.r_max, "t": float(t), "values": np.asarray(values)}


def write_snapshot(path: str | Path, grid: RadialGrid, t: float, values: np.ndarray) -> Path:
    return write_json(path, snapshot_payload(grid, t, values))


def load_snapshot(path: str | Path, grid: RadialGrid) -> tuple[float, np.ndarray]:
    """(t, values) from a snapshot file written on the same grid."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read snapshot {path}: {exc}", key="init.path") from exc
    missing = {"version", "n", "r_max", "t", "values"} - set(payload)
    if missing:
        raise ConfigurationError(f"snapshot {path} lacks {', '.join(sorted(missing))}", key="init.path")
    if payload["n"] != grid.n or not math.isclose(payload["r_max"], grid.r_max, rel_tol=1e-12):
        raise ConfigurationError(
            f"snapshot {path} is on n={payload['n']}, r_max={payload['r_max']}; run grid is {grid!r}",
            key="init.path",
        )
    values = np.array(payload["values"], dtype=float)
    if values.shape != (grid.n,):
        raise ConfigurationError(f"snapshot {path} holds {values.size} values, expected {grid.n}", key="init.path")
    return float(payload["t"]), values


# ── Geometry outputs ─────────────────────────────────────────────────────────

def path_payload(samples) -> list[dict]:
    """Geodesic path as [{t, rho, phi}]."""
    return [{"t": s.t, "rho": s.rho.values, "phi": s.phi.values} for s in samples]


def shooting_payload(result) -> dict:
    return {
        "wk_estimate": result.wk_estimate,
        "residual": result.terminal_residual,
        "iterations": result.iterations,
        "converged": result.converged,
    }
