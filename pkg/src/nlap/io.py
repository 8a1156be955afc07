"""Report and field serialization (UTF-8, deterministic)."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .mesh import GalerkinSpace, SimplexMesh


def _clean(obj):
    # JSON has no inf/nan; integers and floats from numpy become builtins.
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(path, report: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(report), encoding="utf-8")
    return path


def write_field_csv(path, space: GalerkinSpace, xi) -> Path:
    """One row per vertex with columns ``x, y[, z], u``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    u = space.nodal(xi)
    names = ["x", "y", "z"][: space.dim] + ["u"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for p, val in zip(space.mesh.vertices, u):
            w.writerow([repr(float(c)) for c in p] + [repr(float(val))])
    return path


def read_field_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :-1], data[:, -1]


def write_mesh_csv(directory, mesh: SimplexMesh) -> tuple[Path, Path]:
    """``vertices.csv`` (coordinates and boundary flag) and ``elements.csv``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    vpath, epath = d / "vertices.csv", d / "elements.csv"
    names = ["x", "y", "z"][: mesh.dim]
    with open(vpath, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id"] + names + ["boundary"])
        for i, (p, b) in enumerate(zip(mesh.vertices, mesh.boundary)):
            w.writerow([i] + [repr(float(c)) for c in p] + [int(b)])
    with open(epath, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id"] + [f"v{a}" for a in range(mesh.dim + 1)])
        for i, e in enumerate(mesh.elements):
            w.writerow([i] + [int(v) for v in e])
    return vpath, epath
