"""General utils."""

import csv
import hashlib
import json
import logging
import os
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from mcf_modes.types import FloatArray, MatrixLike, PathLike

try:
    import blake3

    BLAKE3_AVAILABLE = True
except ImportError:
    BLAKE3_AVAILABLE = False

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-14


class ModeLabError(Exception):
    """base exception for all mcf-modes failures."""

    pass


def format_float(value: float) -> str:
    """Format a real with 17 significant digits (lossless for 64-bit floats)."""
    return format(float(value), ".17g")


def new_hasher(name: Optional[str] = None) -> Any:
    """Create a hasher, preferring BLAKE3 when it is installed.

    Args:
        name (Optional[str], optional): force "blake3" or "sha256". Defaults to None.

    Returns:
        Any: hasher object with `update` and `hexdigest`
    """
    if name == "blake3" or (name is None and BLAKE3_AVAILABLE):
        if not BLAKE3_AVAILABLE:
            raise ValueError("blake3 requested but the package is not installed")
        return blake3.blake3()
    return hashlib.sha256()


def hasher_name(hasher: Any) -> str:
    """Algorithm name of a hasher created by `new_hasher`."""
    return str(hasher.name).lower()


def checksum_bytes(data: bytes) -> str:
    """Hex digest of a byte string."""
    hasher = new_hasher()
    hasher.update(data)
    return hasher.hexdigest().lower()


def checksum_file(file_path: PathLike, block_size: int = 1024 * 1024) -> str:
    """Hex digest of a file, read in blocks.

    Args:
        file_path (PathLike): file to hash
        block_size (int, optional): block size to read. Defaults to 1024*1024.

    Returns:
        str: lower case hex digest
    """
    hasher = new_hasher()
    with open(file_path, "rb") as f:
        while True:
            block_data = f.read(block_size)
            if not block_data:
                break
            hasher.update(block_data)
    return hasher.hexdigest().lower()


def canonical_json(obj: Any) -> str:
    """Serialize to JSON with sorted keys and no insignificant whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_json(path: PathLike, obj: Any) -> Path:
    """Write an indented, key-sorted JSON file, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_csv(
    path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]
) -> Path:
    """Write a CSV file; floats are written with 17 significant digits.

    Args:
        path (PathLike): output file
        header (Sequence[str]): column names
        rows (Iterable[Sequence[Any]]): row values

    Returns:
        Path: the written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [
                    format_float(v)
                    if isinstance(v, (float, np.floating))
                    else v
                    for v in row
                ]
            )
    return path


def read_csv(path: PathLike) -> List[Dict[str, str]]:
    """Read a CSV file written by `write_csv` into a list of row dicts."""
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def as_sym_matrix(value: MatrixLike, name: str = "matrix") -> FloatArray:
    """Convert to a square float matrix and check symmetry.

    Args:
        value (MatrixLike): matrix entries
        name (str, optional): name used in error messages. Defaults to "matrix".

    Returns:
        FloatArray: exactly symmetrized copy

    Raises:
        ValueError: not square, not finite or not symmetric within tolerance
    """
    matrix = np.array(value, dtype=float, ndmin=2)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"{name} must be square, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise ValueError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(matrix)))) if matrix.size else 1.0
    if np.max(np.abs(matrix - matrix.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (matrix + matrix.T)


def env_int(name: str, default: int) -> int:
    """Read a positive integer environment variable.

    Args:
        name (str): variable name
        default (int): value used when unset or empty

    Returns:
        int: parsed value
    """
    raw = os.getenv(name, "")
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError as e:
        raise ModeLabError(f"{name} must be an integer, got {raw!r}") from e
    if value < 1:
        raise ModeLabError(f"{name} must be >= 1, got {value}")
    return value


def package_version(name: str = "mcf-modes") -> str:
    """Installed version of a distribution, or "unknown"."""
    try:
        return metadata.version(name)
    except metadata.PackageNotFoundError:
        return "unknown"
