"""On-disk formats: raw float32 volumes with JSON sidecars, track CSVs.

A volume is stored as two files: ``<name>.raw`` holding the values as
little-endian 32-bit floats in C order (axes: axis1, axis2,
orientation), and ``<name>.json`` describing the grid::

    {"format": "raw-f32-le-c", "manifold": "m2",
     "shape": [n1, n2, n3], "axes": ["x", "y", "theta"],
     "origin": [...], "spacing": [...],
     "ranges": [[lo, hi], ...], "periodic": [...],
     "kind": "...", "provenance": {...}}

Reading returns exactly the stored float32 values, so write -> read ->
write reproduces the bytes bit for bit.  Track CSVs have the header
``t,c1,c2,c3,u1,u2,u3,W`` and one row per sample, printed with 17
significant digits (lossless for float64).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import BadConfig
from .grids import GridSpec
from .tracking import GeodesicTrack

__all__ = [
    "save_volume",
    "load_volume",
    "sidecar_path",
    "save_track_csv",
    "load_track_csv",
]

_FORMAT = "raw-f32-le-c"
_CSV_HEADER = "t,c1,c2,c3,u1,u2,u3,W"


def sidecar_path(raw_path) -> Path:
    return Path(raw_path).with_suffix(".json")


def save_volume(raw_path, values: np.ndarray, grid: GridSpec, *,
                kind: str = "volume", provenance: dict | None = None) -> Path:
    """Write a grid-shaped array and its JSON sidecar; returns the raw path."""
    raw_path = Path(raw_path)
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise BadConfig("array shape does not match the grid")
    data = np.ascontiguousarray(values, dtype="<f4")
    raw_path.parent.mkdir(parents=True, exist_ok=True)
    raw_path.write_bytes(data.tobytes())
    meta = {
        "format": _FORMAT,
        "manifold": grid.manifold,
        "shape": list(grid.shape),
        "axes": list(grid.axis_names),
        "origin": list(grid.origin),
        "spacing": list(grid.spacing),
        "ranges": [list(r) for r in grid.ranges],
        "periodic": list(grid.periodic),
        "kind": kind,
        "provenance": provenance or {},
    }
    sidecar_path(raw_path).write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n"
    )
    return raw_path


def load_volume(raw_path):
    """Read a volume written by :func:`save_volume`.

    Returns:
        (values, grid, meta): the float32 array, the reconstructed
        :class:`GridSpec`, and the full sidecar dictionary.

    Raises:
        BadConfig: missing files, unknown format, or size mismatch,
            naming the expected file.
    """
    raw_path = Path(raw_path)
    side = sidecar_path(raw_path)
    if not side.exists():
        raise BadConfig(f"missing sidecar file: expected {side}")
    if not raw_path.exists():
        raise BadConfig(f"missing raw array file: expected {raw_path}")
    meta = json.loads(side.read_text())
    if meta.get("format") != _FORMAT:
        raise BadConfig(f"unsupported array format {meta.get('format')!r} in {side}")
    shape = tuple(int(n) for n in meta["shape"])
    data = np.frombuffer(raw_path.read_bytes(), dtype="<f4")
    if data.size != int(np.prod(shape)):
        raise BadConfig(
            f"{raw_path} holds {data.size} values; sidecar promises {shape}"
        )
    grid = GridSpec(
        manifold=meta["manifold"],
        shape=shape,
        origin=tuple(meta["origin"]),
        spacing=tuple(meta["spacing"]),
        periodic=tuple(meta["periodic"]),
    )
    return data.reshape(shape).copy(), grid, meta


def save_track_csv(path, track: GeodesicTrack) -> Path:
    """Write a track as CSV rows t,c1,c2,c3,u1,u2,u3,W (seed row last)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = np.column_stack([track.t, track.points, track.u, track.w])
    lines = [_CSV_HEADER]
    for row in table:
        lines.append(",".join(f"{v:.17g}" for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def load_track_csv(path):
    """Read a track CSV back as (t, points, u, w) float64 arrays."""
    path = Path(path)
    if not path.exists():
        raise BadConfig(f"missing track file: expected {path}")
    text = path.read_text().strip().splitlines()
    if not text or text[0].strip() != _CSV_HEADER:
        raise BadConfig(f"{path} is not a track CSV (bad header)")
    rows = np.array(
        [[float(v) for v in line.split(",")] for line in text[1:]], dtype=float
    )
    if rows.ndim != 2 or rows.shape[1] != 8:
        raise BadConfig(f"{path} has malformed rows")
    return rows[:, 0], rows[:, 1:4], rows[:, 4:7], rows[:, 7]
