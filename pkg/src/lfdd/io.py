"""CSV and JSON serialization of records, snapshots and mode tables.

Floats are written with 17 significant digits so that files round-trip
exactly and repeated runs can be compared byte for byte.

JSON snapshot schema::

    {"step": int, "t": float, "columns": [...], "rows": [[...], ...]}

with the same columns as the CSV snapshot.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

RECORD_COLUMNS = ("t", "E", "diss_rate", "cum_diss", "max_residual")
SNAPSHOT_COLUMNS = ("x", "eps11", "eps22", "eps33", "eps23", "eps13", "eps12",
                    "v1", "v2", "v3", "omega23", "omega13", "omega12", "V_norm")
MODE_COLUMNS = ("p", "frequency", "residual", "label")


def fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def _write_csv(path, columns, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n")
    return path


def record_rows(record):
    return list(zip(record.times, record.energy, record.diss_rate, record.cum_diss, record.max_residual))


def write_record_csv(path, record):
    return _write_csv(path, RECORD_COLUMNS, record_rows(record))


def write_record_json(path, record, extra=None):
    data = {c: list(col) for c, col in zip(RECORD_COLUMNS, zip(*record_rows(record)))}
    data["steps"] = list(record.steps)
    if extra:
        data.update(extra)
    return write_json(path, data)


def read_record_csv(path):
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != RECORD_COLUMNS:
        raise ValueError(f"unexpected record columns {rows[0]}")
    arr = np.array(rows[1:], dtype=float).reshape(-1, len(RECORD_COLUMNS))
    return {c: arr[:, i] for i, c in enumerate(RECORD_COLUMNS)}


def snapshot_rows(grid, state, ops):
    vel = np.linalg.norm(ops.velocity(state.eps), axis=-1)
    w = state.omega
    cols = [grid.x[:, None], state.eps, state.v,
            np.stack([w[:, 1, 2], w[:, 0, 2], w[:, 0, 1]], axis=1), vel[:, None]]
    return np.hstack(cols)


def write_snapshot_csv(path, grid, state, ops):
    return _write_csv(path, SNAPSHOT_COLUMNS, snapshot_rows(grid, state, ops))


def write_snapshot_json(path, grid, state, ops, step):
    return write_json(path, {"step": step, "t": state.t, "columns": list(SNAPSHOT_COLUMNS),
                             "rows": snapshot_rows(grid, state, ops)})


def mode_rows(modes):
    return [(p + 1, modes.frequencies[p], modes.residuals[p], modes.labels[p].value)
            for p in range(len(modes))]


def write_modes_csv(path, modes):
    return _write_csv(path, MODE_COLUMNS, mode_rows(modes))


def write_modes_json(path, modes, extra=None):
    data = {"modes": [dict(zip(MODE_COLUMNS, r)) for r in mode_rows(modes)],
            "summary": modes.summary()}
    if extra:
        data.update(extra)
    return write_json(path, data)
