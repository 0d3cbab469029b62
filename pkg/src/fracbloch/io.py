"""Deterministic file emission: CSV band tables, JSON reports, field snapshots.

All floats are written with 17 significant digits and a lowercase exponent,
which round-trips float64 exactly; identical inputs therefore produce
byte-identical files (wall-clock fields excepted).
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import ConfigError
from .grids import BoxGrid, Field2D

__all__ = [
    "fmt_float",
    "dumps_json",
    "write_json",
    "write_band_csv",
    "write_field_snapshot",
    "read_field_snapshot",
]

SNAPSHOT_SCHEMA_VERSION = 1


def fmt_float(x: float) -> str:
    if not np.isfinite(x):
        raise ConfigError(f"refusing to serialize non-finite float {x!r}")
    return format(float(x), ".17g")


def _normalize(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps_json(obj, indent: int = 0) -> str:
    """JSON with deterministic float formatting and insertion order."""
    obj = _normalize(obj)
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(str(k))}: {dumps_json(v, indent + 2)}'
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        seq = [dumps_json(v, indent + 2) for v in obj]
        flat = "[" + ", ".join(seq) + "]"
        if len(flat) <= 100:
            return flat
        return "[\n" + ",\n".join(f"{pad}  {s}" for s in seq) + f"\n{pad}]"
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, float):
        return fmt_float(obj)
    raise ConfigError(f"cannot serialize {type(obj).__name__} to JSON")


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_json(obj) + "\n")


def write_band_csv(path: str, k_list: np.ndarray, energies: np.ndarray) -> None:
    """Band table: header kx,ky,E1..EB, one row per quasimomentum."""
    k_list = np.atleast_2d(np.asarray(k_list, float))
    energies = np.atleast_2d(np.asarray(energies, float))
    nb = energies.shape[1]
    header = "kx,ky," + ",".join(f"E{b + 1}" for b in range(nb))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for k, row in zip(k_list, energies):
            cols = [fmt_float(k[0]), fmt_float(k[1])]
            cols += [fmt_float(e) for e in row]
            fh.write(",".join(cols) + "\n")


def write_field_snapshot(path_base: str, field: Field2D,
                         sigma: float | None = None) -> tuple:
    """Raw little-endian float64 (re, im) interleaved row-major + JSON sidecar."""
    bin_path = path_base + ".bin"
    meta_path = path_base + ".json"
    data = np.ascontiguousarray(field.values, dtype="<c16")
    with open(bin_path, "wb") as fh:
        fh.write(data.tobytes())
    grid = field.grid
    meta = {
        "schemaVersion": SNAPSHOT_SCHEMA_VERSION,
        "M": grid.cells,
        "n": grid.points_per_cell,
        "epsilon": grid.epsilon,
        "t": field.t,
        "sigma": sigma,
        "byteOrder": "LE",
        "layout": "row-major-interleaved",
        "shape": [grid.npts, grid.npts],
        "carrier": [field.carrier[0], field.carrier[1]],
    }
    write_json(meta_path, meta)
    return bin_path, meta_path


def read_field_snapshot(path_base: str, basis) -> tuple:
    """Read back a snapshot written by :func:`write_field_snapshot`."""
    with open(path_base + ".json") as fh:
        meta = json.load(fh)
    if meta.get("schemaVersion") != SNAPSHOT_SCHEMA_VERSION:
        raise ConfigError(
            f"snapshot schema version {meta.get('schemaVersion')} unsupported")
    grid = BoxGrid(basis, meta["M"], meta["n"], meta["epsilon"])
    raw = np.fromfile(path_base + ".bin", dtype="<c16")
    values = raw.reshape(meta["shape"][0], meta["shape"][1])
    field = Field2D(grid=grid, values=values,
                    carrier=np.array(meta["carrier"], float), t=meta["t"])
    return field, meta


def ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
