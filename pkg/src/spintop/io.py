"""Deterministic file output and a small reader for the emitted tables.

All writers produce byte-identical files for identical inputs: floats are
formatted with %.17g (exact float64 round-trip), newlines are always \\n,
and JSON objects are emitted with sorted keys.  Wall-clock information
never goes into data files or the run summary; it is confined to the
separate timings file so output comparisons stay byte-stable.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .errors import ParameterError

__all__ = [
    "format_value",
    "write_table",
    "read_table",
    "trajectory_header",
    "trajectory_rows",
    "write_trajectories",
    "write_summary",
    "write_timings",
    "ensure_out_dir",
]


def format_value(value) -> str:
    """Render one cell for CSV output."""
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    x = float(value)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _json_cell(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        return None if math.isnan(x) else x
    return value


def write_table(path: str, header: list[str], rows, fmt: str) -> int:
    """Write rows of cells as CSV or JSONL; returns the row count."""
    if fmt not in ("csv", "jsonl"):
        raise ParameterError(f"unknown output format {fmt!r}")
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as f:
        if fmt == "csv":
            f.write(",".join(header) + "\n")
            for row in rows:
                if len(row) != len(header):
                    raise ParameterError("row width disagrees with header")
                f.write(",".join(format_value(v) for v in row) + "\n")
                count += 1
        else:
            for row in rows:
                if len(row) != len(header):
                    raise ParameterError("row width disagrees with header")
                obj = {k: _json_cell(v) for k, v in zip(header, row)}
                f.write(json.dumps(obj, sort_keys=True, allow_nan=False) + "\n")
                count += 1
    return count


def read_table(path: str) -> tuple[list[str], list[dict]]:
    """Read a table written by ``write_table``; cells come back as strings
    (CSV) or JSON values (JSONL)."""
    if path.endswith(".jsonl"):
        rows = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    rows.append(json.loads(line))
        header = sorted(rows[0]) if rows else []
        return header, rows
    with open(path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    if not lines:
        return [], []
    header = lines[0].split(",")
    return header, [dict(zip(header, ln.split(","))) for ln in lines[1:]]


_V_COLS = ["v_xx", "v_xy", "v_xz", "v_yy", "v_yz", "v_zz"]
_V_IDX = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


def trajectory_header(with_V: bool) -> list[str]:
    head = ["ic_id", "traj_id", "step", "m", "n_x", "n_y", "n_z"]
    return head + _V_COLS if with_V else head


def trajectory_rows(ts):
    """Flatten a TrajectorySet into per-step rows, trajectory-major."""
    with_v = ts.V is not None
    for b in range(ts.n_traj):
        for t in range(ts.n_steps):
            row = [
                int(ts.ic_index[b]),
                int(ts.traj_index[b]),
                t,
                float(ts.m[b, t]),
                float(ts.n[b, t, 0]),
                float(ts.n[b, t, 1]),
                float(ts.n[b, t, 2]),
            ]
            if with_v:
                row.extend(float(ts.V[b, t, a, c]) for a, c in _V_IDX)
            yield row


def write_trajectories(ts, path: str, fmt: str) -> int:
    return write_table(path, trajectory_header(ts.V is not None),
                       trajectory_rows(ts), fmt)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return _json_cell(obj)


def write_summary(path: str, summary: dict) -> None:
    """One sorted-key JSON object; contains no wall-clock data."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(json.dumps(_jsonable(summary), sort_keys=True, allow_nan=False) + "\n")


def write_timings(path: str, timings: dict) -> None:
    """Execution metadata (wall times, thread count); excluded from
    byte-for-byte output comparisons."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(json.dumps(_jsonable(timings), sort_keys=True) + "\n")


def ensure_out_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
