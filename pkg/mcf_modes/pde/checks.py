"""Solver self-checks: spatial order, reflection symmetry and the cylinder fixed point."""

import logging
import math
from typing import Dict, Sequence

import numpy as np

from mcf_modes.hermite.basis import Dimensions
from mcf_modes.hermite.modes import ModeVector, apply_l
from mcf_modes.pde.grid import RadialGraphState, SolverConfig
from mcf_modes.pde.solver import core_slice, nonlinear_term, rhs, step

logger = logging.getLogger(__name__)


def exact_rhs(u: ModeVector, state: RadialGraphState) -> np.ndarray:
    """Rhs of a polynomial field with analytic derivatives, Δ_f u = (L − 1)u."""
    points = state.points
    linear = apply_l(u)(points)
    return linear + nonlinear_term(u(points), u.gradient(points), u.hessian(points), state.dims)


def rhs_error(u: ModeVector, dims: Dimensions, config: SolverConfig, core: float) -> float:
    """Max difference between discrete and exact rhs on |x_i| <= core."""
    base = RadialGraphState.zeros(dims, config)
    state = base.with_values(u(base.points), 0.0)
    diff = rhs(state, config) - exact_rhs(u, state)
    return float(np.max(np.abs(diff[core_slice(state.axis, core, dims.k)])))


def spatial_order(
    u: ModeVector,
    dims: Dimensions,
    spacings: Sequence[float] = (0.2, 0.1, 0.05),
    R_dom: float = 6.0,
    core: float = 3.0,
) -> Dict[str, object]:
    """Observed convergence order of `rhs` under grid refinement.

    Args:
        u (ModeVector): smooth polynomial test field
        dims (Dimensions): dimensions
        spacings (Sequence[float], optional): grid spacings, each half the previous. Defaults to (0.2, 0.1, 0.05).
        R_dom (float, optional): grid half-width. Defaults to 6.0.
        core (float, optional): region where errors are measured. Defaults to 3.0.

    Returns:
        Dict[str, object]: errors per spacing and the observed orders log2(e_h / e_h/2)
    """
    errors = [rhs_error(u, dims, SolverConfig(h=h, R_dom=R_dom), core) for h in spacings]
    orders = [math.log2(a / b) for a, b in zip(errors, errors[1:]) if a > 0 and b > 0]
    logger.debug(f"rhs errors {errors}, observed orders {orders}")
    return {"spacings": list(spacings), "errors": errors, "orders": orders}


def reflection_defect(state: RadialGraphState) -> float:
    """Largest |u(x) − u(Rᵢx)| over coordinate reflections Rᵢ."""
    values = state.values
    return max(float(np.max(np.abs(values - np.flip(values, axis=a)))) for a in range(state.k))


def fixed_point_drift(dims: Dimensions, config: SolverConfig, n_steps: int) -> float:
    """sup|u| after `n_steps` steps from the round cylinder u ≡ 0."""
    state = RadialGraphState.zeros(dims, config)
    for _ in range(n_steps):
        state = step(state, config)
    return state.sup_norm()
