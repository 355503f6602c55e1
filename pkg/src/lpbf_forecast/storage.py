"""On-disk formats for runs, feature tables, penalty matrices and tours.

A run directory holds ``manifest.json``, ``index.csv`` (move, stop_index,
t_start, t_end) and ``snapshots/move_NNNN.bin``, each snapshot being
``nx * ny`` little-endian float64 values in row-major ``[i, j]`` order.
Stop indices are 0-based everywhere.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .heatsim import GridSpec, LaserParams, MaterialParams, RunRecord, Snapshot
from .tour import PenaltyMatrix

__all__ = [
    "save_run",
    "load_run",
    "write_table",
    "read_table",
    "write_matrix",
    "read_matrix",
    "write_tour",
    "read_tour",
    "write_json",
    "config_hash",
    "file_digest",
]


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def save_run(run: RunRecord, path, extra: dict | None = None) -> Path:
    path = Path(path)
    snap_dir = path / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for k, s in enumerate(run.snapshots):
        name = f"move_{k:04d}.bin"
        (snap_dir / name).write_bytes(np.ascontiguousarray(s.values, dtype="<f8").tobytes())
        rows.append((k, s.stop, repr(float(s.t_start)), repr(float(s.t_end))))
    with open(path / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["move", "stop_index", "t_start", "t_end"])
        w.writerows(rows)
    manifest = {
        "format": "lpbf-run/1",
        "grid": run.grid.to_dict(),
        "material": run.material.to_dict(),
        "laser": {"power": run.laser.power, "omega": run.laser.omega},
        "theta0": run.theta0,
        "tau": run.tau,
        "substeps": run.substeps,
        "trajectory": [int(i) for i in run.trajectory],
        "stops": run.stops.tolist(),
        "snapshot_dtype": "<f8",
        "snapshot_order": "row-major [i=x, j=y]",
        "moves": len(run.snapshots),
    }
    if extra:
        manifest.update(extra)
    write_json(path / "manifest.json", manifest)
    return path


def load_run(path) -> RunRecord:
    path = Path(path)
    if not (path / "manifest.json").exists():
        raise FileNotFoundError(f"no run manifest in {path}")
    m = json.loads((path / "manifest.json").read_text())
    grid = GridSpec(**m["grid"])
    run = RunRecord(grid, MaterialParams(**m["material"]),
                    LaserParams(m["laser"]["power"], m["laser"]["omega"]), m["theta0"], m["tau"],
                    m["substeps"], m["trajectory"], np.array(m["stops"], dtype=float))
    with open(path / "index.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            k = int(row["move"])
            raw = (path / "snapshots" / f"move_{k:04d}.bin").read_bytes()
            vals = np.frombuffer(raw, dtype="<f8").reshape(grid.shape).copy()
            run.snapshots.append(Snapshot(int(row["stop_index"]), vals, float(row["t_start"]), float(row["t_end"])))
    return run


def write_table(path, table, index_name="move_index", prefix="subdomain_", start=1):
    """Rows ``(index, col_1..col_L)``; the first row index is ``start``."""
    table = np.asarray(table, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([index_name] + [f"{prefix}{l + 1}" for l in range(table.shape[1])])
        for k, row in enumerate(table):
            w.writerow([k + start] + [repr(float(v)) for v in row])


def read_table(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]])


def write_matrix(path, pm: PenaltyMatrix):
    """First line ``n``, then ``n`` comma-separated rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([pm.n])
        for row in pm.C:
            w.writerow([repr(float(v)) for v in row])


def read_matrix(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    n = int(rows[0][0])
    C = np.array([[float(v) for v in r] for r in rows[1:n + 1]])
    if C.shape != (n, n):
        raise ValueError(f"matrix file declares n={n} but holds {C.shape}")
    return C


def write_tour(path, tour):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stop_index"])
        for i in tour:
            w.writerow([int(i)])


def read_tour(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:] if rows and not rows[0][0].lstrip("-").isdigit() else rows
    return np.array([int(r[0]) for r in body if r], dtype=np.int64)
