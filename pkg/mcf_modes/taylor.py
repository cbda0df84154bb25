"""Quadratic and cubic Taylor terms of the rescaled MCF nonlinearity."""

import logging
import math
from dataclasses import dataclass
from typing import Dict

import numpy as np

from mcf_modes.hermite.basis import DEFAULT_CAP, Dimensions, unit_index
from mcf_modes.hermite.modes import ModeVector
from mcf_modes.types import FieldLike, FloatArray, MatrixLike, ScalarField
from mcf_modes.utils import as_sym_matrix

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
SQRT6 = math.sqrt(6.0)


@dataclass(frozen=True, eq=False)
class LeadingModes:
    """Coefficients of U = a𝔭⁽⁰⁾ + Σ bᵢ𝔭⁽¹⁾ᵢ + Σ c_ij 𝔭⁽²⁾ᵢⱼ.

    The quadratic part sums over all ordered pairs (i, j) with c symmetric.
    For i ≠ j, 𝔭⁽²⁾ᵢⱼ = 𝔭⁽¹⁾ᵢ𝔭⁽¹⁾ⱼ / √2, so the orthonormal product mode
    carries the coefficient √2·c_ij.
    """

    a: float
    b: FloatArray
    c: FloatArray

    def __post_init__(self) -> None:
        """Normalize arrays and check shapes."""
        b = np.array(self.b, dtype=float).reshape(-1)
        c = as_sym_matrix(self.c, "c")
        if c.shape != (b.size, b.size):
            raise ValueError(f"c has shape {c.shape}, expected {(b.size, b.size)}")
        if not (math.isfinite(self.a) and np.all(np.isfinite(b))):
            raise ValueError("leading modes must be finite")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def k(self) -> int:
        """Axis dimension."""
        return int(self.b.size)

    @classmethod
    def zeros(cls, k: int) -> "LeadingModes":
        """Zero modes on ℝᵏ."""
        return cls(0.0, np.zeros(k), np.zeros((k, k)))

    def to_vector(self) -> FloatArray:
        """Flatten to (a, b, upper triangle of c) for ODE integrators."""
        iu = np.triu_indices(self.k)
        return np.concatenate([[self.a], self.b, self.c[iu]])

    @classmethod
    def from_vector(cls, y: FloatArray, k: int) -> "LeadingModes":
        """Inverse of `to_vector`."""
        iu = np.triu_indices(k)
        c = np.zeros((k, k))
        c[iu] = y[1 + k :]
        c = c + np.triu(c, 1).T
        return cls(float(y[0]), np.array(y[1 : 1 + k]), c)

    def __add__(self, other: "LeadingModes") -> "LeadingModes":
        return LeadingModes(self.a + other.a, self.b + other.b, self.c + other.c)

    def __sub__(self, other: "LeadingModes") -> "LeadingModes":
        return LeadingModes(self.a - other.a, self.b - other.b, self.c - other.c)

    def __mul__(self, scalar: float) -> "LeadingModes":
        return LeadingModes(scalar * self.a, scalar * self.b, scalar * self.c)

    __rmul__ = __mul__

    def norms(self) -> Dict[str, float]:
        """Norms of the constant, linear and quadratic parts."""
        return {
            "U1": abs(self.a),
            "U12": float(np.linalg.norm(self.b)),
            "U0": float(np.linalg.norm(self.c)),
        }

    def max_abs(self) -> float:
        """Largest entry magnitude."""
        return float(
            max(abs(self.a), np.max(np.abs(self.b), initial=0.0), np.max(np.abs(self.c), initial=0.0))
        )

    def to_mode_vector(self, cap: int = DEFAULT_CAP) -> ModeVector:
        """Orthonormal mode coefficients of the field."""
        k = self.k
        coeffs = {unit_index(k): self.a}
        for i in range(k):
            coeffs[unit_index(k, i)] = self.b[i]
            coeffs[unit_index(k, i, i)] = self.c[i, i]
            for j in range(i + 1, k):
                coeffs[unit_index(k, i, j)] = SQRT2 * self.c[i, j]
        return ModeVector(k, coeffs, cap)

    @classmethod
    def from_mode_vector(cls, v: ModeVector) -> "LeadingModes":
        """Read the degree <= 2 part of a mode vector."""
        k = v.k
        b = np.array([v[unit_index(k, i)] for i in range(k)])
        c = np.zeros((k, k))
        for i in range(k):
            c[i, i] = v[unit_index(k, i, i)]
            for j in range(i + 1, k):
                c[i, j] = c[j, i] = v[unit_index(k, i, j)] / SQRT2
        return cls(v[unit_index(k)], b, c)

    def to_dict(self) -> Dict[str, object]:
        """Serialize."""
        return {"a": self.a, "b": self.b.tolist(), "c": self.c.tolist()}


def q2_field(u: FieldLike) -> FieldLike:
    """Quadratic Taylor term Q₂(U) = −½U², pointwise.

    Args:
        u (FieldLike): callable field, array of values or constant

    Returns:
        FieldLike: same kind as the input
    """
    if callable(u):
        return lambda x: -0.5 * np.asarray(u(x)) ** 2
    return -0.5 * np.asarray(u, dtype=float) ** 2


def q3_values(
    u: FloatArray, grad: FloatArray, hess: FloatArray, dims: Dimensions
) -> FloatArray:
    """Cubic Taylor term from pointwise values, gradients (..., k) and Hessians (..., k, k)."""
    hgg = np.einsum("...i,...ij,...j->...", grad, hess, grad)
    return -0.5 * u**2 + 0.5 * u**3 - 2.0 * dims.codim * hgg


def q3_field(u: ModeVector, dims: Dimensions) -> ScalarField:
    """Cubic Taylor term Q₃(U) = −½U² + ½U³ − 2(n−k)∇²U(∇U, ∇U).

    Args:
        u (ModeVector): polynomial field with analytic derivatives
        dims (Dimensions): dimensions

    Returns:
        ScalarField: callable on points of shape (..., k)
    """

    def field(x: FloatArray) -> FloatArray:
        return q3_values(u(x), u.gradient(x), u.hessian(x), dims)

    return field


def q_field(u: ModeVector, order: int, dims: Dimensions) -> ScalarField:
    """Taylor term of the given order (1: zero, 2: Q₂, 3: Q₃).

    Args:
        u (ModeVector): field
        order (int): Taylor order, 1 to 3
        dims (Dimensions): dimensions

    Returns:
        ScalarField: callable field
    """
    if order == 1:
        return lambda x: np.zeros(np.asarray(x).shape[:-1])
    if order == 2:
        return q2_field(u)  # type: ignore[return-value]
    if order == 3:
        return q3_field(u, dims)
    raise ValueError(f"Taylor order must be 1, 2 or 3, got {order}")


def q2_leading(u: LeadingModes) -> LeadingModes:
    """Closed-form projection of −½U² onto degrees <= 2.

    Args:
        u (LeadingModes): (a, b, c)

    Returns:
        LeadingModes: (ā, b̄, c̄) with ā = −½(a² + |b|² + |c|²),
        b̄ = −ab − √2 c b and c̄ = −√2 c² − bbᵀ/√2 − ac
    """
    a, b, c = u.a, u.b, u.c
    a_bar = -0.5 * (a**2 + b @ b + np.sum(c * c))
    b_bar = -a * b - SQRT2 * (c @ b)
    c_bar = -SQRT2 * (c @ c) - np.outer(b, b) / SQRT2 - a * c
    return LeadingModes(a_bar, b_bar, c_bar)


def diagonal_entries(c: MatrixLike) -> FloatArray:
    """Diagonal of a diagonal matrix (or a vector of diagonal entries).

    Raises:
        ValueError: off-diagonal entries present
    """
    arr = np.asarray(c, dtype=float)
    if arr.ndim == 1:
        return arr.copy()
    matrix = as_sym_matrix(arr, "c")
    off = matrix - np.diag(np.diag(matrix))
    if np.any(off != 0.0):
        raise ValueError("expected a diagonal matrix")
    return np.diag(matrix).copy()


@dataclass(frozen=True)
class Q2DiagProjections:
    """Eigenspace components of −½U² for diagonal U = Σ cᵢᵢ𝔭⁽²⁾ᵢᵢ."""

    v1: float
    v_half: ModeVector
    v0: ModeVector
    v_minus_half: ModeVector
    v_minus1: ModeVector


def q2_diag_projections(c: MatrixLike, cap: int = DEFAULT_CAP) -> Q2DiagProjections:
    """Eigenspace projections of Q₂ for a diagonal quadratic mode.

    The 𝒱₋₁ part is −½Σ_(i≠j) cᵢᵢcⱼⱼ 𝔭⁽²⁾ᵢᵢ𝔭⁽²⁾ⱼⱼ − (√6/2)Σ cᵢᵢ² 𝔭⁽⁴⁾ᵢᵢᵢᵢ; the sum
    runs over ordered pairs, so each orthonormal product mode
    𝔭⁽²⁾ᵢᵢ𝔭⁽²⁾ⱼⱼ (i < j) gets −cᵢᵢcⱼⱼ in total.

    Args:
        c (MatrixLike): diagonal matrix or its diagonal
        cap (int, optional): degree cap of the returned vectors. Defaults to DEFAULT_CAP.

    Returns:
        Q2DiagProjections: components on eigenvalues 1, ½, 0, −½, −1

    Raises:
        ValueError: non-diagonal input
    """
    d = diagonal_entries(c)
    k = d.size
    v0 = {unit_index(k, i, i): -SQRT2 * d[i] ** 2 for i in range(k)}
    v_minus1 = {unit_index(k, i, i, i, i): -SQRT6 / 2.0 * d[i] ** 2 for i in range(k)}
    for i in range(k):
        for j in range(i + 1, k):
            v_minus1[unit_index(k, i, i, j, j)] = -d[i] * d[j]
    return Q2DiagProjections(
        v1=float(-0.5 * np.sum(d**2)),
        v_half=ModeVector.zeros(k, cap),
        v0=ModeVector(k, v0, cap),
        v_minus_half=ModeVector.zeros(k, cap),
        v_minus1=ModeVector(k, v_minus1, cap),
    )


def correction_map(c: MatrixLike, cap: int = DEFAULT_CAP) -> ModeVector:
    """Quadratic mode corrected by the slaved constant and degree-4 modes.

    Q′(U′) = ½Σcᵢᵢ²𝔭⁽⁰⁾ + Σcᵢᵢ𝔭⁽²⁾ᵢᵢ − ½Σ_(i≠j)cᵢᵢcⱼⱼ𝔭⁽²⁾ᵢᵢ𝔭⁽²⁾ⱼⱼ − (√6/2)Σcᵢᵢ²𝔭⁽⁴⁾ᵢᵢᵢᵢ
    """
    d = diagonal_entries(c)
    k = d.size
    parts = q2_diag_projections(d, cap)
    base = ModeVector(k, {unit_index(k, i, i): d[i] for i in range(k)}, cap)
    constant = ModeVector(k, {unit_index(k): -parts.v1}, cap)
    return constant + base + parts.v_minus1


def bar_q(u: MatrixLike, cstar: float) -> FloatArray:
    """Matrix polynomial −√2U² + 2tr(U²)U + C*U³.

    Args:
        u (MatrixLike): symmetric k×k matrix
        cstar (float): cubic coefficient C*

    Returns:
        FloatArray: symmetric k×k matrix
    """
    m = as_sym_matrix(u, "U")
    m2 = m @ m
    out = -SQRT2 * m2 + 2.0 * np.trace(m2) * m + cstar * (m2 @ m)
    return 0.5 * (out + out.T)

