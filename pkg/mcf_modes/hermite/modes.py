"""Mode vectors and the diagonal action of the linearized operator."""

import logging
import math
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from mcf_modes.hermite.basis import (
    DEFAULT_CAP,
    check_index,
    l_eigenvalue,
    mode_matrix,
    total_degree,
)
from mcf_modes.types import FloatArray, MultiIndex

logger = logging.getLogger(__name__)


class ModeVector:
    """Finite coefficient vector over orthonormal Hermite modes on ℝᵏ.

    Zero coefficients are not stored. The vector is also a polynomial field:
    calling it evaluates the field, and `gradient` / `hessian` evaluate its
    derivatives analytically.
    """

    __slots__ = ("k", "cap", "_coeffs")

    def __init__(
        self,
        k: int,
        coeffs: Optional[Mapping[MultiIndex, float]] = None,
        cap: int = DEFAULT_CAP,
    ) -> None:
        """Create a mode vector.

        Args:
            k (int): axis dimension
            coeffs (Optional[Mapping[MultiIndex, float]], optional): mode coefficients. Defaults to None.
            cap (int, optional): degree cap. Defaults to DEFAULT_CAP.
        """
        self.k = k
        self.cap = cap
        self._coeffs: Dict[MultiIndex, float] = {}
        for m, value in (coeffs or {}).items():
            m = tuple(int(d) for d in m)
            check_index(m, k, cap)
            value = float(value)
            if not math.isfinite(value):
                raise ValueError(f"coefficient of {m} is not finite")
            if value != 0.0:
                self._coeffs[m] = value

    @classmethod
    def zeros(cls, k: int, cap: int = DEFAULT_CAP) -> "ModeVector":
        """Zero vector."""
        return cls(k, {}, cap)

    @classmethod
    def basis(cls, m: MultiIndex, cap: int = DEFAULT_CAP) -> "ModeVector":
        """Unit vector on a single mode."""
        return cls(len(m), {m: 1.0}, cap)

    @classmethod
    def from_arrays(
        cls,
        modes: Sequence[MultiIndex],
        values: Sequence[float],
        k: int,
        cap: int = DEFAULT_CAP,
    ) -> "ModeVector":
        """Build from parallel sequences of modes and coefficients."""
        return cls(k, dict(zip(modes, values)), cap)

    def coefficient(self, m: MultiIndex) -> float:
        """Coefficient of mode `m` (zero if absent)."""
        return self._coeffs.get(tuple(m), 0.0)

    def __getitem__(self, m: MultiIndex) -> float:
        return self.coefficient(m)

    def items(self) -> List[Tuple[MultiIndex, float]]:
        """Stored (mode, coefficient) pairs ordered by degree."""
        return sorted(
            self._coeffs.items(), key=lambda kv: (sum(kv[0]), tuple(-d for d in kv[0]))
        )

    def modes(self) -> List[MultiIndex]:
        """Stored modes ordered by degree."""
        return [m for m, _ in self.items()]

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self.modes())

    def __len__(self) -> int:
        return len(self._coeffs)

    def _combine(self, other: "ModeVector", sign: float) -> "ModeVector":
        if self.k != other.k:
            raise ValueError(f"cannot combine mode vectors on R^{self.k} and R^{other.k}")
        cap = max(self.cap, other.cap)
        coeffs = dict(self._coeffs)
        for m, value in other._coeffs.items():
            coeffs[m] = coeffs.get(m, 0.0) + sign * value
        return ModeVector(self.k, coeffs, cap)

    def __add__(self, other: "ModeVector") -> "ModeVector":
        return self._combine(other, 1.0)

    def __sub__(self, other: "ModeVector") -> "ModeVector":
        return self._combine(other, -1.0)

    def __mul__(self, scalar: float) -> "ModeVector":
        return ModeVector(
            self.k, {m: scalar * v for m, v in self._coeffs.items()}, self.cap
        )

    __rmul__ = __mul__

    def __neg__(self) -> "ModeVector":
        return self * -1.0

    def __repr__(self) -> str:
        terms = ", ".join(f"{m}: {v:.6g}" for m, v in self.items())
        return f"ModeVector(k={self.k}, cap={self.cap}, {{{terms}}})"

    @property
    def max_degree(self) -> int:
        """Highest total degree with a nonzero coefficient (−1 for zero)."""
        return max((total_degree(m) for m in self._coeffs), default=-1)

    def norm(self) -> float:
        """Euclidean norm of the coefficients (L² norm of the field)."""
        return math.sqrt(sum(v * v for v in self._coeffs.values()))

    def restrict(
        self,
        max_degree: Optional[int] = None,
        predicate: Optional[Callable[[MultiIndex], bool]] = None,
    ) -> "ModeVector":
        """Keep modes with degree <= `max_degree` that satisfy `predicate`."""
        keep = {
            m: v
            for m, v in self._coeffs.items()
            if (max_degree is None or total_degree(m) <= max_degree)
            and (predicate is None or predicate(m))
        }
        return ModeVector(self.k, keep, self.cap)

    def of_degree(self, d: int) -> "ModeVector":
        """Component in the span of degree-`d` modes."""
        return self.restrict(predicate=lambda m: total_degree(m) == d)

    def above(self, lam: float) -> "ModeVector":
        """Component on modes with L-eigenvalue > `lam`."""
        return self.restrict(predicate=lambda m: l_eigenvalue(m) > lam)

    def allclose(self, other: "ModeVector", atol: float = 1e-12) -> bool:
        """Coefficient-wise comparison."""
        return (self - other).max_abs() <= atol

    def max_abs(self) -> float:
        """Largest coefficient magnitude."""
        return max((abs(v) for v in self._coeffs.values()), default=0.0)

    def _points(self, points: FloatArray) -> Tuple[FloatArray, Tuple[int, ...]]:
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != self.k:
            raise ValueError(
                f"points must have trailing dimension {self.k}, got {points.shape}"
            )
        shape = points.shape[:-1]
        return points.reshape(-1, self.k), shape

    def _evaluate(self, points: FloatArray, derivative: MultiIndex) -> FloatArray:
        flat, shape = self._points(points)
        if not self._coeffs:
            return np.zeros(shape)
        modes = list(self._coeffs)
        values = np.array([self._coeffs[m] for m in modes])
        return (values @ mode_matrix(modes, flat, derivative)).reshape(shape)

    def __call__(self, points: FloatArray) -> FloatArray:
        """Evaluate the field at points of shape (..., k)."""
        return self._evaluate(points, (0,) * self.k)

    def gradient(self, points: FloatArray) -> FloatArray:
        """Gradient of the field, shape (..., k)."""
        parts = []
        for axis in range(self.k):
            order = [0] * self.k
            order[axis] = 1
            parts.append(self._evaluate(points, tuple(order)))
        return np.stack(parts, axis=-1)

    def hessian(self, points: FloatArray) -> FloatArray:
        """Hessian of the field, shape (..., k, k)."""
        shape = np.asarray(points).shape[:-1]
        out = np.empty(shape + (self.k, self.k))
        for i in range(self.k):
            for j in range(i, self.k):
                order = [0] * self.k
                order[i] += 1
                order[j] += 1
                out[..., i, j] = self._evaluate(points, tuple(order))
                out[..., j, i] = out[..., i, j]
        return out

    def to_dict(self) -> Dict[str, float]:
        """Serialize as {"d1,d2,...": coefficient}."""
        return {",".join(str(d) for d in m): v for m, v in self.items()}

    @classmethod
    def from_dict(
        cls, data: Mapping[str, float], k: int, cap: int = DEFAULT_CAP
    ) -> "ModeVector":
        """Inverse of `to_dict`."""
        return cls(
            k, {tuple(int(d) for d in key.split(",")): v for key, v in data.items()}, cap
        )


def apply_l(v: ModeVector) -> ModeVector:
    """Apply L = Δ_f + 1 by scaling every coefficient with its eigenvalue."""
    return ModeVector(
        v.k, {m: l_eigenvalue(m) * c for m, c in v.items()}, v.cap
    )
