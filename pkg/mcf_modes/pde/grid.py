"""Tensor grids, solver configuration and graph states."""

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Mapping, Tuple

import numpy as np

from mcf_modes.hermite.basis import Dimensions
from mcf_modes.types import FloatArray

logger = logging.getLogger(__name__)

SCHEMES = ("imex", "rk4")
BOUNDARIES = ("extrapolate", "frozen")


@dataclass(frozen=True)
class SolverConfig:
    """Method-of-lines settings.

    `margin` enters the explicit stability bound dt <= h²/(2k(1 + margin));
    `upwind_band` is the width next to the boundary where the drift term is
    differenced one-sidedly.
    """

    h: float = 0.05
    dt: float = 0.01
    R_dom: float = 12.0
    scheme: str = "imex"
    boundary: str = "extrapolate"
    margin: float = 0.1
    blowup_guard: float = 10.0
    upwind_band: float = 1.0

    def __post_init__(self) -> None:
        """Validate."""
        if self.h <= 0 or self.dt <= 0 or self.R_dom <= 0:
            raise ValueError("h, dt and R_dom must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if abs(self.R_dom / self.h - round(self.R_dom / self.h)) > 1e-9:
            raise ValueError(f"R_dom={self.R_dom} is not a multiple of h={self.h}")
        if self.margin < 0 or self.blowup_guard <= 0 or self.upwind_band < 0:
            raise ValueError("margin, blowup_guard and upwind_band must be non-negative")

    @property
    def nodes_per_axis(self) -> int:
        """Number of grid nodes along each axis."""
        return int(round(2.0 * self.R_dom / self.h)) + 1

    def explicit_dt_bound(self, k: int) -> float:
        """Largest explicit step h²/(2k(1 + margin))."""
        return self.h**2 / (2.0 * k * (1.0 + self.margin))

    def check_stability(self, k: int) -> None:
        """Raise if the explicit scheme is selected with too large a step."""
        if self.scheme == "rk4" and self.dt > self.explicit_dt_bound(k) * (1 + 1e-12):
            raise ValueError(
                f"dt={self.dt} exceeds the explicit bound {self.explicit_dt_bound(k):.6g} "
                f"for h={self.h}, k={k}"
            )

    def with_stable_dt(self, k: int) -> "SolverConfig":
        """Copy with dt set to the explicit bound when the scheme is explicit."""
        if self.scheme != "rk4":
            return self
        return replace(self, dt=min(self.dt, self.explicit_dt_bound(k)))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SolverConfig":
        """Build from a mapping; unknown keys raise KeyError naming the field."""
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise KeyError(key)
        return cls(**dict(data))

    def to_dict(self) -> Dict[str, Any]:
        """Serialize."""
        return asdict(self)


def axis_coordinates(h: float, R_dom: float) -> FloatArray:
    """Node coordinates −R_dom, −R_dom + h, ..., R_dom along one axis."""
    n = int(round(2.0 * R_dom / h)) + 1
    return -R_dom + h * np.arange(n)


@dataclass(frozen=True, eq=False)
class RadialGraphState:
    """Graph function u(x, τ) of a rotationally symmetric flow over the cylinder.

    `values` has shape (N,)*k on the tensor grid [−R_dom, R_dom]ᵏ with spacing h.
    """

    dims: Dimensions
    tau: float
    h: float
    R_dom: float
    values: FloatArray = field(repr=False)

    def __post_init__(self) -> None:
        """Check the grid shape."""
        values = np.asarray(self.values, dtype=float)
        n = int(round(2.0 * self.R_dom / self.h)) + 1
        if values.shape != (n,) * self.dims.k:
            raise ValueError(
                f"values have shape {values.shape}, expected {(n,) * self.dims.k}"
            )
        object.__setattr__(self, "values", values)

    @property
    def k(self) -> int:
        """Axis dimension."""
        return self.dims.k

    @property
    def axis(self) -> FloatArray:
        """Node coordinates along one axis."""
        return axis_coordinates(self.h, self.R_dom)

    @property
    def points(self) -> FloatArray:
        """Node coordinates, shape (N,)*k + (k,)."""
        return grid_points(self.h, self.R_dom, self.k)

    @classmethod
    def zeros(
        cls, dims: Dimensions, config: SolverConfig, tau: float = 0.0
    ) -> "RadialGraphState":
        """Round cylinder u ≡ 0."""
        n = config.nodes_per_axis
        return cls(dims, tau, config.h, config.R_dom, np.zeros((n,) * dims.k))

    def with_values(self, values: FloatArray, tau: float) -> "RadialGraphState":
        """New state on the same grid."""
        return RadialGraphState(self.dims, tau, self.h, self.R_dom, values)

    def sup_norm(self) -> float:
        """max |u|."""
        return float(np.max(np.abs(self.values)))


def grid_points(h: float, R_dom: float, k: int) -> FloatArray:
    """Tensor-grid node coordinates, shape (N,)*k + (k,)."""
    axis = axis_coordinates(h, R_dom)
    mesh = np.meshgrid(*([axis] * k), indexing="ij")
    return np.stack(mesh, axis=-1)


def boundary_mask(shape: Tuple[int, ...]) -> FloatArray:
    """Boolean mask of nodes on the outer face of the tensor grid."""
    mask = np.zeros(shape, dtype=bool)
    for axis in range(len(shape)):
        index: list = [slice(None)] * len(shape)
        index[axis] = 0
        mask[tuple(index)] = True
        index[axis] = -1
        mask[tuple(index)] = True
    return mask


def trapezoid_weights(h: float, R_dom: float, k: int) -> FloatArray:
    """Trapezoid weights times the normalized Gaussian density on the grid."""
    axis = axis_coordinates(h, R_dom)
    w1 = np.full(axis.shape, h)
    w1[0] = w1[-1] = 0.5 * h
    w1 = w1 * np.exp(-(axis**2) / 4.0) / math.sqrt(4.0 * math.pi)
    weights = w1
    for _ in range(k - 1):
        weights = np.multiply.outer(weights, w1)
    return weights
