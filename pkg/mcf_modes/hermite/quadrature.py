"""Gauss–Hermite quadrature, inner products and projections."""

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from numpy.polynomial.hermite import hermgauss

from mcf_modes.hermite.basis import (
    DEFAULT_CAP,
    check_index,
    mode_matrix,
    modes_up_to,
    total_degree,
)
from mcf_modes.hermite.modes import ModeVector
from mcf_modes.types import FieldLike, FloatArray, MultiIndex
from mcf_modes.utils import ModeLabError, env_int

logger = logging.getLogger(__name__)

DEFAULT_ORDER = 20


class QuadratureError(ModeLabError):
    """exceptions thrown by quadrature evaluation."""

    pass


def default_order() -> int:
    """Quadrature order per coordinate, from `MCF_MODES_QUADRATURE_ORDER`."""
    return env_int("MCF_MODES_QUADRATURE_ORDER", DEFAULT_ORDER)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Tensorized Gauss–Hermite rule for the weight (4π)^(-k/2) e^(-|x|²/4).

    Exact for polynomials of degree <= 2·order − 1 in each coordinate; the
    weights sum to one.
    """

    k: int
    order: int
    nodes: FloatArray = field(repr=False)
    weights: FloatArray = field(repr=False)

    @classmethod
    def gauss(cls, k: int, order: Optional[int] = None) -> "QuadratureRule":
        """Tensor rule on ℝᵏ (cached per (k, order)).

        Args:
            k (int): axis dimension
            order (Optional[int], optional): nodes per coordinate. Defaults to `default_order()`.

        Returns:
            QuadratureRule: the rule
        """
        return _gauss_rule(k, order or default_order())

    def __len__(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=32)
def _gauss_rule(k: int, order: int) -> QuadratureRule:
    if order < 1:
        raise ValueError(f"quadrature order must be positive, got {order}")
    t, w = hermgauss(order)
    # e^{-t²} weight mapped to (4π)^{-1/2} e^{-x²/4} by x = 2t
    x1 = 2.0 * t
    w1 = w / math.sqrt(math.pi)
    nodes = np.array(list(itertools.product(x1, repeat=k)), dtype=float)
    weights = np.array(
        [math.prod(ws) for ws in itertools.product(w1, repeat=k)], dtype=float
    )
    nodes.setflags(write=False)
    weights.setflags(write=False)
    logger.debug(f"built Gauss-Hermite rule k={k} order={order} ({len(weights)} nodes)")
    return QuadratureRule(k, order, nodes, weights)


def field_values(f: FieldLike, rule: QuadratureRule) -> FloatArray:
    """Evaluate a field (callable, node array or constant) at the rule's nodes.

    Raises:
        QuadratureError: shape mismatch or non-finite value
    """
    if callable(f):
        values = np.asarray(f(rule.nodes), dtype=float)
    else:
        values = np.asarray(f, dtype=float)
    if values.ndim == 0:
        values = np.full(len(rule), float(values))
    values = values.reshape(-1)
    if values.shape[0] != len(rule):
        raise QuadratureError(
            f"field has {values.shape[0]} values, rule has {len(rule)} nodes"
        )
    if not np.all(np.isfinite(values)):
        bad = int(np.argmax(~np.isfinite(values)))
        raise QuadratureError(f"non-finite field value at node {rule.nodes[bad]}")
    return values


def inner(f: FieldLike, g: FieldLike, rule: QuadratureRule) -> float:
    """Gaussian inner product ∫ f g (4π)^(-k/2) e^(-|x|²/4) dx.

    Args:
        f (FieldLike): first field
        g (FieldLike): second field
        rule (QuadratureRule): quadrature rule

    Returns:
        float: the inner product
    """
    return float(np.dot(rule.weights, field_values(f, rule) * field_values(g, rule)))


@lru_cache(maxsize=64)
def _basis_at_nodes(k: int, cap: int, order: int) -> FloatArray:
    rule = QuadratureRule.gauss(k, order)
    values = mode_matrix(modes_up_to(k, cap), rule.nodes)
    values.setflags(write=False)
    return values


def project(
    f: FieldLike,
    cap: int = DEFAULT_CAP,
    rule: Optional[QuadratureRule] = None,
    k: Optional[int] = None,
) -> ModeVector:
    """Project a field onto all modes of degree <= cap.

    Args:
        f (FieldLike): field to project
        cap (int, optional): degree cap. Defaults to DEFAULT_CAP.
        rule (Optional[QuadratureRule], optional): quadrature rule. Defaults to a Gauss rule on ℝᵏ.
        k (Optional[int], optional): axis dimension, required without `rule`. Defaults to None.

    Returns:
        ModeVector: coefficients inner(f, 𝔭_m)
    """
    if rule is None:
        if k is None:
            raise ValueError("project needs either a rule or k")
        rule = QuadratureRule.gauss(k)
    values = field_values(f, rule)
    coeffs = _basis_at_nodes(rule.k, cap, rule.order) @ (rule.weights * values)
    return ModeVector.from_arrays(modes_up_to(rule.k, cap), coeffs, rule.k, cap)


def gram_matrix(k: int, cap: int = DEFAULT_CAP, order: Optional[int] = None) -> FloatArray:
    """Gram matrix of all modes up to `cap` under the rule."""
    rule = QuadratureRule.gauss(k, order)
    basis = _basis_at_nodes(k, cap, rule.order)
    return (basis * rule.weights) @ basis.T


def product_expand(
    m1: MultiIndex,
    m2: MultiIndex,
    cap: int = DEFAULT_CAP,
    rule: Optional[QuadratureRule] = None,
) -> ModeVector:
    """Orthonormal expansion of the product 𝔭_m1 · 𝔭_m2.

    Args:
        m1 (MultiIndex): first mode
        m2 (MultiIndex): second mode
        cap (int, optional): cap of each factor; the product may reach 2·cap. Defaults to DEFAULT_CAP.
        rule (Optional[QuadratureRule], optional): quadrature rule. Defaults to one exact for the product.

    Returns:
        ModeVector: coefficients over modes of degree <= deg(m1) + deg(m2)
    """
    check_index(m1, cap=cap)
    check_index(m2, len(m1), cap)
    k = len(m1)
    degree = total_degree(m1) + total_degree(m2)
    if rule is None:
        # integrand degree is at most 2 * degree
        rule = QuadratureRule.gauss(k, max(default_order(), degree + 1))
    product = mode_matrix([m1], rule.nodes)[0] * mode_matrix([m2], rule.nodes)[0]
    expanded = project(product, degree, rule)
    # drop quadrature noise; exact coefficients are O(1)
    return ModeVector(
        k,
        {m: v for m, v in expanded.items() if abs(v) > 1e-13},
        max(2 * cap, degree),
    )


def expand_product(
    u: ModeVector, v: ModeVector, rule: Optional[QuadratureRule] = None
) -> ModeVector:
    """Bilinear extension of `product_expand` to mode vectors."""
    if u.k != v.k:
        raise ValueError("mode vectors live on different axis dimensions")
    cap = max(u.cap, v.cap)
    out = ModeVector.zeros(u.k, 2 * cap)
    for m1, c1 in u.items():
        for m2, c2 in v.items():
            out = out + (c1 * c2) * product_expand(m1, m2, cap, rule)
    return out
