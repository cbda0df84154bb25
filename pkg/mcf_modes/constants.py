"""Derived constants of the cubic projections and the generated constants file."""

import json
import logging
import math
import os
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from tqdm.auto import tqdm

from mcf_modes.hermite.basis import Dimensions, unit_index
from mcf_modes.hermite.modes import ModeVector
from mcf_modes.hermite.quadrature import QuadratureRule, default_order, inner, project
from mcf_modes.taylor import SQRT2, SQRT6, correction_map, diagonal_entries, q3_field
from mcf_modes.types import FloatArray, MatrixLike, PathLike
from mcf_modes.utils import (
    ModeLabError,
    canonical_json,
    checksum_bytes,
    package_version,
    write_json,
)

logger = logging.getLogger(__name__)

STABILITY_TOL = 1e-6
ORDER_STEP = 4
# projections below are polynomials of degree <= 6 in the amplitude
FIT_DEGREE = 6
FIT_AMPLITUDES = np.linspace(-0.6, 0.6, 13)


class ConstantsError(ModeLabError):
    """exceptions thrown while deriving or loading derived constants."""

    pass


@dataclass(frozen=True)
class DerivedConstants:
    """Constants of the cubic mode projections for a given n−k.

    `C2` is the signed coefficient of cᵢᵢwᵢ in the neutral projection of Q₂,
    i.e. minus `pair_inner` = ⟨𝔭⁽²⁾𝔭⁽⁴⁾, 𝔭⁽²⁾⟩.
    """

    codim: int
    C1: float
    C2: float
    Cstar: float
    pair_inner: float
    order: int

    def to_dict(self) -> Dict[str, float]:
        """Serialize."""
        return asdict(self)


def _amplitude_coefficients(
    fn: Callable[[float], float], amplitudes: FloatArray = FIT_AMPLITUDES
) -> FloatArray:
    values = np.array([fn(float(eps)) for eps in amplitudes])
    return P.polyfit(amplitudes, values, FIT_DEGREE)


def _derive(codim: int, order: int) -> DerivedConstants:
    dims = Dimensions(codim + 1, 1)
    rule = QuadratureRule.gauss(1, order)
    p2 = ModeVector.basis(unit_index(1, 0, 0))
    p4 = ModeVector.basis(unit_index(1, 0, 0, 0, 0))

    def self_projection(eps: float) -> float:
        return inner(q3_field(eps * p2, dims), p2, rule)

    coeffs = _amplitude_coefficients(self_projection)
    if abs(coeffs[2] + SQRT2) > STABILITY_TOL:
        raise ConstantsError(
            f"quadratic coefficient {coeffs[2]} of the neutral projection is not -sqrt(2)"
        )
    c1 = float(coeffs[3]) - 1.5

    pair_inner = inner(lambda x: p2(x) * p4(x), p2, rule)
    c2 = -pair_inner

    def corrected_projection(eps: float) -> float:
        return inner(q3_field(correction_map([eps]), dims), p2, rule)

    corrected = _amplitude_coefficients(corrected_projection)
    # for k = 1 the neutral coefficient is -√2c² + (2 + C*)c³
    cstar = float(corrected[3]) - 2.0
    assembled = c1 - SQRT6 / 2.0 * c2 - 1.0
    if abs(cstar - assembled) > STABILITY_TOL:
        raise ConstantsError(
            f"C* from the corrected projection ({cstar}) disagrees with "
            f"C1 - (sqrt(6)/2) C2 - 1 = {assembled}"
        )
    return DerivedConstants(codim, c1, c2, cstar, pair_inner, order)


@lru_cache(maxsize=None)
def _derive_checked(codim: int, order: int) -> DerivedConstants:
    base = _derive(codim, order)
    check = _derive(codim, order + ORDER_STEP)
    for name in ("C1", "C2", "Cstar"):
        a, b = getattr(base, name), getattr(check, name)
        if abs(a - b) > STABILITY_TOL:
            raise ConstantsError(
                f"{name} differs between quadrature orders {order} and "
                f"{order + ORDER_STEP}: {a} vs {b}"
            )
    logger.debug(
        f"derived constants for n-k={codim}: C1={base.C1:.12g} C2={base.C2:.12g} "
        f"C*={base.Cstar:.12g}"
    )
    return base


def derive_constants(dims: Dimensions, order: Optional[int] = None) -> DerivedConstants:
    """Derive C1, C2 and C* by quadrature.

    C1 is read from the cubic amplitude coefficient of ⟨Q₃(ε𝔭⁽²⁾), 𝔭⁽²⁾⟩,
    C2 from the 𝔭⁽²⁾𝔭⁽⁴⁾ coupling and C* from the neutral projection of Q₃
    composed with the correction map. The values only depend on n−k.

    Args:
        dims (Dimensions): dimensions
        order (Optional[int], optional): quadrature order. Defaults to `default_order()`.

    Returns:
        DerivedConstants: the constants

    Raises:
        ConstantsError: orders `order` and `order + 4` disagree by more than 1e-6
    """
    return _derive_checked(dims.codim, order or default_order())


def q3_v0_project(
    a: float,
    c: MatrixLike,
    v: Optional[MatrixLike] = None,
    w: Optional[Iterable[float]] = None,
    constants: Optional[DerivedConstants] = None,
    dims: Optional[Dimensions] = None,
) -> FloatArray:
    """Polynomial part of the neutral projection of Q₃ for diagonal input.

    Coefficient of 𝔭⁽²⁾ᵢᵢ: −√2cᵢᵢ² − acᵢᵢ + (3/2)Σⱼcⱼⱼ²cᵢᵢ + C1cᵢᵢ³ − 2Σⱼcⱼⱼvⱼᵢ + C2cᵢᵢwᵢ,
    where v holds the 𝔭⁽²⁾ᵢᵢ𝔭⁽²⁾ⱼⱼ coefficients summed over ordered pairs
    (symmetric, zero diagonal) and w the pure degree-4 coefficients.

    Args:
        a (float): constant mode
        c (MatrixLike): diagonal quadratic modes (matrix or diagonal)
        v (Optional[MatrixLike], optional): off-diagonal degree-4 modes. Defaults to zero.
        w (Optional[Iterable[float]], optional): pure degree-4 modes. Defaults to zero.
        constants (Optional[DerivedConstants], optional): constants. Defaults to derived from `dims`.
        dims (Optional[Dimensions], optional): dimensions, used when `constants` is None. Defaults to None.

    Returns:
        FloatArray: diagonal coefficients

    Raises:
        ValueError: an amplitude has magnitude >= 1 or v is malformed
    """
    d = diagonal_entries(c)
    k = d.size
    v_arr = np.zeros((k, k)) if v is None else np.array(v, dtype=float, ndmin=2)
    w_arr = np.zeros(k) if w is None else np.array(list(w), dtype=float)
    if v_arr.shape != (k, k) or w_arr.shape != (k,):
        raise ValueError(f"v must be {k}x{k} and w must have {k} entries")
    if np.any(np.diag(v_arr) != 0.0) or np.any(v_arr != v_arr.T):
        raise ValueError("v must be symmetric with zero diagonal")
    for name, values in (("a", np.array([a])), ("c", d), ("v", v_arr), ("w", w_arr)):
        if np.any(np.abs(values) >= 1.0):
            raise ValueError(f"amplitude {name} must be below 1 in magnitude")
    if constants is None:
        if dims is None:
            raise ValueError("q3_v0_project needs constants or dims")
        constants = derive_constants(dims)
    return (
        -SQRT2 * d**2
        - a * d
        + 1.5 * np.sum(d**2) * d
        + constants.C1 * d**3
        - 2.0 * (v_arr @ d)
        + constants.C2 * d * w_arr
    )


def neutral_oracle(u: ModeVector, dims: Dimensions, order: Optional[int] = None) -> FloatArray:
    """Quadrature projection of Q₃(u) onto the diagonal quadratic modes."""
    rule = QuadratureRule.gauss(u.k, order)
    projected = project(q3_field(u, dims), 2, rule)
    return np.array([projected[unit_index(u.k, i, i)] for i in range(u.k)])


def _entry(name: str, constants: DerivedConstants) -> Dict[str, object]:
    value = getattr(constants, name)
    body = {
        "name": name,
        "codim": constants.codim,
        "value": value,
        "quadrature_order": constants.order,
    }
    return {**body, "dims": f"n-k={constants.codim}", "checksum": checksum_bytes(canonical_json(body).encode())}


def write_constants_file(
    path: PathLike,
    codims: Iterable[int] = (1, 2, 3),
    order: Optional[int] = None,
    quiet: bool = True,
) -> Path:
    """Generate the constants file.

    Args:
        path (PathLike): output file
        codims (Iterable[int], optional): values of n−k. Defaults to (1, 2, 3).
        order (Optional[int], optional): quadrature order. Defaults to `default_order()`.
        quiet (bool, optional): disable progress bar. Defaults to True.

    Returns:
        Path: the written file
    """
    order = order or default_order()
    entries: List[Dict[str, object]] = []
    for codim in tqdm(list(codims), desc="deriving constants", disable=quiet):
        constants = derive_constants(Dimensions(codim + 1, 1), order)
        entries.extend(_entry(name, constants) for name in ("C1", "C2", "Cstar"))
    document = {
        "generator": f"mcf-modes {package_version()}",
        "quadrature_order": order,
        "stability_order": order + ORDER_STEP,
        "entries": entries,
    }
    logger.info(f"writing {len(entries)} derived constants to {path}")
    return write_json(path, document)


def load_constants_file(path: PathLike) -> Dict[Tuple[str, int], float]:
    """Read and checksum-verify a constants file.

    Args:
        path (PathLike): file written by `write_constants_file`

    Returns:
        Dict[Tuple[str, int], float]: value per (name, n−k)

    Raises:
        ConstantsError: unreadable file or checksum mismatch
    """
    try:
        with open(path) as f:
            document = json.load(f)
        entries = document["entries"]
    except (OSError, ValueError, KeyError) as e:
        raise ConstantsError(f"cannot read constants file {path}: {e}") from e

    values: Dict[Tuple[str, int], float] = {}
    for entry in entries:
        body = {key: entry[key] for key in ("name", "codim", "value", "quadrature_order")}
        if checksum_bytes(canonical_json(body).encode()) != entry["checksum"]:
            raise ConstantsError(f"checksum mismatch for {entry['name']} (n-k={entry['codim']})")
        values[(entry["name"], int(entry["codim"]))] = float(entry["value"])
    return values


def constants_path(run_dir: Optional[PathLike] = None) -> Path:
    """Constants file location: `MCF_MODES_CONSTANTS_FILE` or `<run_dir>/constants.json`."""
    env = os.getenv("MCF_MODES_CONSTANTS_FILE", "")
    if env:
        return Path(env)
    return Path(run_dir or ".") / "constants.json"


def verify_constants_file(path: PathLike, order: Optional[int] = None) -> List[str]:
    """Regenerate constants and list mismatches against a stored file."""
    stored = load_constants_file(path)
    problems = []
    for (name, codim), value in sorted(stored.items()):
        fresh = getattr(derive_constants(Dimensions(codim + 1, 1), order), name)
        if not math.isclose(fresh, value, rel_tol=0.0, abs_tol=STABILITY_TOL):
            problems.append(f"{name} (n-k={codim}): stored {value}, derived {fresh}")
    return problems
