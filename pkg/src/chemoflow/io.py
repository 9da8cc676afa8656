"""Time-series CSV and CNSF binary snapshots.

A snapshot is the magic ``b"CNSF"``, then little-endian u32 values for the
format version (1), the dimension and the cell count per axis, then a
sequence of named fields: u32 name length, UTF-8 name, and the values as
little-endian float64 in row-major order. Fields named ``u_x``, ``u_y`` and
``u_z`` are face arrays (one extra entry along their own axis); all other
fields are cell arrays.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Sequence

import numpy as np

MAGIC = b"CNSF"
VERSION = 1
VELOCITY_NAMES = ("u_x", "u_y", "u_z")


def _format_value(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def write_timeseries(path, rows: Iterable[Mapping[str, Optional[float]]], columns: Sequence[str]) -> Path:
    """Write rows with a header; missing or None entries become empty cells."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_value(row.get(c)) for c in columns])
    return path


def read_timeseries(path) -> Dict[str, list]:
    """Columns of a time-series CSV; empty cells read as None."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    out = {c: [] for c in header}
    for rec in reader:
        for c, v in zip(header, rec):
            out[c].append(float(v) if v != "" else None)
    return out


def field_shape(name: str, n_cells: Sequence[int]) -> tuple:
    shape = list(n_cells)
    if name in VELOCITY_NAMES:
        axis = VELOCITY_NAMES.index(name)
        if axis >= len(shape):
            raise ValueError(f"field {name!r} does not exist in {len(shape)}D")
        shape[axis] += 1
    return tuple(shape)


def write_snapshot(path, n_cells: Sequence[int], fields: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    parts = [MAGIC, struct.pack("<II", VERSION, len(n_cells)), struct.pack(f"<{len(n_cells)}I", *n_cells)]
    for name, values in fields.items():
        arr = np.asarray(values, dtype="<f8")
        expected = field_shape(name, n_cells)
        if arr.shape != expected:
            raise ValueError(f"field {name!r} has shape {arr.shape}, expected {expected}")
        encoded = name.encode("utf-8")
        parts += [struct.pack("<I", len(encoded)), encoded, np.ascontiguousarray(arr).tobytes()]
    path.write_bytes(b"".join(parts))
    return path


def read_snapshot(path) -> tuple:
    """Return ``(n_cells, fields)`` from a snapshot file."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError("not a CNSF snapshot")
    version, dim = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    pos = 12
    n_cells = struct.unpack_from(f"<{dim}I", data, pos)
    pos += 4 * dim
    fields = {}
    while pos < len(data):
        (length,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos : pos + length].decode("utf-8")
        pos += length
        shape = field_shape(name, n_cells)
        count = int(np.prod(shape))
        if pos + 8 * count > len(data):
            raise ValueError(f"truncated payload for field {name!r}")
        fields[name] = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape).astype(float)
        pos += 8 * count
    return tuple(n_cells), fields


def state_fields(state) -> Dict[str, np.ndarray]:
    """Snapshot fields of a simulation state."""
    out = {"n": state.n, "c": state.c, "P": state.P}
    for name, comp in zip(VELOCITY_NAMES, state.u):
        out[name] = comp
    return out
