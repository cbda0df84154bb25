"""Orthonormal Hermite modes for the weight (4π)^(-1/2) e^(-x²/4)."""

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from mcf_modes.types import FloatArray, MultiIndex
from mcf_modes.utils import ModeLabError

logger = logging.getLogger(__name__)

DEFAULT_CAP = 8
MAX_AXIS_DIM = 3

SQRT2 = math.sqrt(2.0)


class DegreeCapError(ModeLabError):
    """exceptions thrown when a mode exceeds the configured degree cap."""

    pass


@dataclass(frozen=True)
class Dimensions:
    """Dimensions of the cylinder ℝᵏ × 𝕊^(n−k) (codimension one)."""

    n: int
    k: int

    def __post_init__(self) -> None:
        """Validate 1 <= k < n and k <= MAX_AXIS_DIM."""
        if not (isinstance(self.n, int) and isinstance(self.k, int)):
            raise ValueError(f"dimensions must be integers, got n={self.n}, k={self.k}")
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not 1 <= self.k < self.n:
            raise ValueError(f"need 1 <= k < n, got n={self.n}, k={self.k}")
        if self.k > MAX_AXIS_DIM:
            raise ValueError(f"k must be <= {MAX_AXIS_DIM}, got {self.k}")

    @property
    def codim(self) -> int:
        """Dimension n−k of the sphere factor."""
        return self.n - self.k

    @property
    def sphere_radius(self) -> float:
        """Radius √(2(n−k)) of the round cylinder."""
        return math.sqrt(2.0 * self.codim)

    @property
    def cylinder_norm_factor(self) -> float:
        """Ratio of the cylinder L²_f norm to the normalized Gaussian norm.

        For a function of x ∈ ℝᵏ only, integrating over ℝᵏ × 𝕊^(n−k) against
        e^(−|x|²/4) gives vol(𝕊^(n−k)) (4π)^(k/2) times the normalized
        Gaussian integral.
        """
        m = self.codim
        unit_volume = 2.0 * math.pi ** ((m + 1) / 2) / math.gamma((m + 1) / 2)
        volume = unit_volume * self.sphere_radius**m
        return math.sqrt(volume * (4.0 * math.pi) ** (self.k / 2))

    def to_dict(self) -> Dict[str, int]:
        """Serialize."""
        return {"n": self.n, "k": self.k}


def total_degree(m: MultiIndex) -> int:
    """Total degree Σ degrees of a multi-index."""
    return int(sum(m))


def check_index(m: MultiIndex, k: Optional[int] = None, cap: int = DEFAULT_CAP) -> None:
    """Validate a multi-index.

    Args:
        m (MultiIndex): per-coordinate degrees
        k (Optional[int], optional): expected number of coordinates. Defaults to None.
        cap (int, optional): degree cap. Defaults to DEFAULT_CAP.

    Raises:
        DegreeCapError: total degree above cap
        ValueError: malformed index
    """
    if k is not None and len(m) != k:
        raise ValueError(f"multi-index {m} does not have {k} coordinates")
    if any((not isinstance(d, (int, np.integer))) or d < 0 for d in m):
        raise ValueError(f"multi-index {m} must hold non-negative integers")
    if total_degree(m) > cap:
        raise DegreeCapError(f"mode {m} has degree {total_degree(m)} > cap {cap}")


def l_eigenvalue(m: MultiIndex) -> float:
    """Eigenvalue 1 − d/2 of L = Δ_f + 1 on a degree-d mode."""
    return 1.0 - total_degree(m) / 2.0


def unit_index(k: int, *axes: int) -> MultiIndex:
    """Multi-index with one degree added per listed axis.

    `unit_index(2, 0)` is 𝔭⁽¹⁾₁, `unit_index(2, 0, 1)` is 𝔭⁽¹⁾₁𝔭⁽¹⁾₂ and
    `unit_index(1, 0, 0, 0, 0)` is the pure degree-4 mode.
    """
    degrees = [0] * k
    for axis in axes:
        degrees[axis] += 1
    return tuple(degrees)


@lru_cache(maxsize=None)
def modes_up_to(k: int, cap: int = DEFAULT_CAP) -> List[MultiIndex]:
    """All multi-indices on ℝᵏ with total degree <= cap.

    Ordered by total degree, then reverse-lexicographically, so 𝔭⁽²⁾₁₁
    comes before 𝔭⁽¹⁾₁𝔭⁽¹⁾₂ and 𝔭⁽²⁾₂₂.
    """
    modes = [
        m for m in itertools.product(range(cap + 1), repeat=k) if sum(m) <= cap
    ]
    return sorted(modes, key=lambda m: (sum(m), tuple(-d for d in m)))


def modes_above(k: int, lam: float, cap: int = DEFAULT_CAP) -> List[MultiIndex]:
    """Modes with L-eigenvalue strictly greater than `lam`."""
    return [m for m in modes_up_to(k, cap) if l_eigenvalue(m) > lam]


CLOSED_FORMS: Dict[int, Callable[[FloatArray], FloatArray]] = {
    0: lambda x: np.ones_like(x),
    1: lambda x: x / SQRT2,
    2: lambda x: (x**2 - 2.0) / (2.0 * SQRT2),
    4: lambda x: (x**4 - 12.0 * x**2 + 12.0) / (8.0 * math.sqrt(6.0)),
}


def hermite_table(cap: int, x: FloatArray) -> FloatArray:
    """Orthonormal Hermite values of degrees 0..cap at `x`.

    Three-term recurrence 𝔭_(d+1) = ((x/√2)𝔭_d − √d 𝔭_(d−1)) / √(d+1).

    Args:
        cap (int): highest degree
        x (FloatArray): evaluation points, any shape

    Returns:
        FloatArray: array of shape (cap + 1, *x.shape)
    """
    x = np.asarray(x, dtype=float)
    table = np.empty((cap + 1,) + x.shape)
    table[0] = 1.0
    if cap >= 1:
        table[1] = x / SQRT2
    for d in range(1, cap):
        table[d + 1] = (x / SQRT2 * table[d] - math.sqrt(d) * table[d - 1]) / math.sqrt(
            d + 1
        )
    return table


def hermite_derivative_table(cap: int, x: FloatArray, order: int = 1) -> FloatArray:
    """Derivatives of the orthonormal Hermite values, using 𝔭_d' = √(d/2) 𝔭_(d−1)."""
    table = hermite_table(cap, x)
    out = np.zeros_like(table)
    for d in range(order, cap + 1):
        factor = 1.0
        for j in range(order):
            factor *= math.sqrt((d - j) / 2.0)
        out[d] = factor * table[d - order]
    return out


def hermite_1d(d: int, x: FloatArray) -> FloatArray:
    """Single orthonormal Hermite polynomial of degree `d` at `x`."""
    return hermite_table(d, x)[d]


def _as_points(x: Union[Sequence[float], FloatArray], k: int) -> FloatArray:
    points = np.asarray(x, dtype=float)
    if points.ndim == 0 or points.shape[-1] != k:
        raise ValueError(f"points must have trailing dimension {k}, got {points.shape}")
    return points


def hermite_eval(
    m: MultiIndex, x: Union[Sequence[float], FloatArray], cap: int = DEFAULT_CAP
) -> FloatArray:
    """Evaluate the product mode 𝔭_m at points of ℝᵏ.

    Args:
        m (MultiIndex): per-coordinate degrees
        x (Sequence[float] | FloatArray): a point or an array of shape (..., k)
        cap (int, optional): degree cap. Defaults to DEFAULT_CAP.

    Returns:
        FloatArray: values with shape x.shape[:-1]

    Raises:
        DegreeCapError: degree above cap
    """
    check_index(m, cap=cap)
    points = _as_points(x, len(m))
    value = np.ones(points.shape[:-1])
    for axis, d in enumerate(m):
        value = value * hermite_1d(d, points[..., axis])
    return value


def mode_matrix(
    modes: Sequence[MultiIndex], points: FloatArray, derivative: Optional[MultiIndex] = None
) -> FloatArray:
    """Values (or partial derivatives) of many modes at many points.

    Args:
        modes (Sequence[MultiIndex]): modes on ℝᵏ
        points (FloatArray): shape (M, k)
        derivative (Optional[MultiIndex], optional): derivative order per axis. Defaults to None.

    Returns:
        FloatArray: shape (len(modes), M)
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    k = points.shape[1]
    if not modes:
        return np.zeros((0, points.shape[0]))
    cap = max(max(m) for m in modes)
    derivative = derivative or (0,) * k
    tables = [
        hermite_derivative_table(cap, points[:, axis], derivative[axis])
        if derivative[axis]
        else hermite_table(cap, points[:, axis])
        for axis in range(k)
    ]
    out = np.ones((len(modes), points.shape[0]))
    for i, m in enumerate(modes):
        for axis, d in enumerate(m):
            out[i] *= tables[axis][d]
    return out
