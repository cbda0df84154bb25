"""Snapshot files: CSV and a compact binary format.

Binary layout (little-endian)::

    magic    8 bytes  b"MCFSNAP1"
    n        int32    ambient dimension
    k        int32    axis dimension
    h        float64  grid spacing
    R_dom    float64  half-width of the grid
    N        int64    nodes per axis
    tau      float64  rescaled time
    values   N**k float64, C order (first axis slowest)
"""

import logging
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from mcf_modes.hermite.basis import Dimensions
from mcf_modes.pde.grid import RadialGraphState
from mcf_modes.types import PathLike
from mcf_modes.utils import ModeLabError, format_float, read_csv

logger = logging.getLogger(__name__)

MAGIC = b"MCFSNAP1"
HEADER = struct.Struct("<8siiddqd")


class SnapshotError(ModeLabError):
    """exceptions thrown when reading a malformed snapshot file."""

    pass


def write_binary(state: RadialGraphState, path: PathLike) -> Path:
    """Write a state in the binary snapshot format.

    Args:
        state (RadialGraphState): state to store
        path (PathLike): output file

    Returns:
        Path: the written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_axis = state.values.shape[0]
    header = HEADER.pack(
        MAGIC, state.dims.n, state.k, state.h, state.R_dom, n_axis, state.tau
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(state.values, dtype="<f8").tobytes())
    return path


def read_binary(path: PathLike) -> RadialGraphState:
    """Read a binary snapshot.

    Raises:
        SnapshotError: bad magic, truncated payload or inconsistent header
    """
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise SnapshotError(f"{path} is too short for a snapshot header")
    magic, n, k, h, R_dom, n_axis, tau = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"{path} is not a snapshot file (magic {magic!r})")
    count = int(n_axis) ** k
    payload = data[HEADER.size :]
    if len(payload) != 8 * count:
        raise SnapshotError(f"{path} holds {len(payload)} value bytes, expected {8 * count}")
    values = np.frombuffer(payload, dtype="<f8").astype(float).reshape((int(n_axis),) * k)
    try:
        return RadialGraphState(Dimensions(n, k), tau, h, R_dom, values)
    except ValueError as e:
        raise SnapshotError(f"inconsistent snapshot header in {path}: {e}") from e


def write_csv(state: RadialGraphState, path: PathLike) -> Path:
    """Write a state as CSV with columns tau, x1[, x2], u."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    points = state.points.reshape(-1, state.k)
    values = state.values.reshape(-1)
    tau = format_float(state.tau)
    header = ["tau"] + [f"x{i + 1}" for i in range(state.k)] + ["u"]
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for x, u in zip(points, values):
            coords = ",".join(format_float(c) for c in x)
            f.write(f"{tau},{coords},{format_float(u)}\n")
    return path


def read_csv_snapshot(path: PathLike, dims: Dimensions) -> RadialGraphState:
    """Rebuild a state from a CSV snapshot on a uniform grid."""
    rows = read_csv(path)
    if not rows:
        raise SnapshotError(f"{path} has no rows")
    k = dims.k
    x1 = np.array(sorted({float(r["x1"]) for r in rows}))
    n_axis = x1.size
    if n_axis < 2 or len(rows) != n_axis**k:
        raise SnapshotError(f"{path} is not a full tensor grid")
    R_dom = float(-x1[0])
    h = 2.0 * R_dom / (n_axis - 1)
    values = np.array([float(r["u"]) for r in rows]).reshape((n_axis,) * k)
    return RadialGraphState(dims, float(rows[0]["tau"]), h, R_dom, values)


def read_snapshot(path: PathLike, dims: Optional[Dimensions] = None) -> RadialGraphState:
    """Read a snapshot by extension (`.csv` needs `dims`, anything else is binary)."""
    if str(path).endswith(".csv"):
        if dims is None:
            raise ValueError("reading a CSV snapshot needs the dimensions")
        return read_csv_snapshot(path, dims)
    return read_binary(path)
