"""Initial data: cut-off mode combinations and restricted field expressions."""

import ast
import logging
import math
import operator
from typing import Callable, Dict, Mapping, Optional, Union

import numpy as np

from mcf_modes.hermite.basis import Dimensions
from mcf_modes.hermite.modes import ModeVector
from mcf_modes.pde.cutoff import cutoff
from mcf_modes.pde.grid import RadialGraphState, SolverConfig
from mcf_modes.types import FloatArray
from mcf_modes.utils import ModeLabError

logger = logging.getLogger(__name__)

FUNCTIONS: Dict[str, Callable[[FloatArray], FloatArray]] = {
    "exp": np.exp,
    "sqrt": np.sqrt,
    "cos": np.cos,
    "sin": np.sin,
    "cosh": np.cosh,
    "tanh": np.tanh,
}
CONSTANTS = {"pi": math.pi}
BINARY = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}


class ExpressionError(ModeLabError):
    """exceptions thrown for seed expressions outside the allowed grammar."""

    pass


def _variables(points: FloatArray) -> Dict[str, FloatArray]:
    k = points.shape[-1]
    env = {f"x{i + 1}": points[..., i] for i in range(k)}
    env["r"] = np.sqrt(np.sum(points * points, axis=-1))
    return env


def _evaluate(node: ast.AST, env: Mapping[str, FloatArray]) -> Union[float, FloatArray]:
    if isinstance(node, ast.Expression):
        return _evaluate(node.body, env)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id in env:
            return env[node.id]
        if node.id in CONSTANTS:
            return CONSTANTS[node.id]
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in BINARY:
        return BINARY[type(node.op)](_evaluate(node.left, env), _evaluate(node.right, env))
    if isinstance(node, ast.UnaryOp) and type(node.op) in UNARY:
        return UNARY[type(node.op)](_evaluate(node.operand, env))
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise ExpressionError(f"call to {ast.dump(node.func)} is not allowed")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        return FUNCTIONS[node.func.id](_evaluate(node.args[0], env))
    raise ExpressionError(f"unsupported syntax: {type(node).__name__}")


def compile_expression(expression: str, k: int) -> Callable[[FloatArray], FloatArray]:
    """Turn an arithmetic expression in x1, x2, r into a field on points (..., k).

    Only numbers, the variables x1..xk and r, `pi`, + − * / ** and the functions
    exp, sqrt, cos, sin, cosh, tanh are accepted.

    Args:
        expression (str): field expression, e.g. "-0.05*(x1**2 - 2)/(2*sqrt(2))"
        k (int): axis dimension

    Returns:
        Callable[[FloatArray], FloatArray]: vectorized field

    Raises:
        ExpressionError: syntax error or disallowed construct
    """
    try:
        tree = ast.parse(expression, mode="eval")
    except SyntaxError as e:
        raise ExpressionError(f"cannot parse seed expression {expression!r}: {e.msg}") from e
    allowed = {f"x{i + 1}" for i in range(k)} | {"r"}
    for node in ast.walk(tree):
        if isinstance(node, ast.Name) and node.id not in allowed | set(CONSTANTS) | set(FUNCTIONS):
            raise ExpressionError(f"unknown name {node.id!r} in seed expression")

    def field(points: FloatArray) -> FloatArray:
        points = np.asarray(points, dtype=float)
        value = _evaluate(tree, _variables(points))
        return np.broadcast_to(np.asarray(value, dtype=float), points.shape[:-1]).copy()

    return field


def seed_state(
    dims: Dimensions,
    config: SolverConfig,
    modes: Optional[ModeVector] = None,
    expression: Optional[str] = None,
    cutoff_radius: Optional[float] = 8.0,
    tau: float = 0.0,
) -> RadialGraphState:
    """Initial state u₀ = f·ω_R from modes or an expression.

    Args:
        dims (Dimensions): dimensions
        config (SolverConfig): grid settings
        modes (Optional[ModeVector], optional): mode amplitudes. Defaults to None.
        expression (Optional[str], optional): field expression. Defaults to None.
        cutoff_radius (Optional[float], optional): cutoff radius R, None for no cutoff. Defaults to 8.0.
        tau (float, optional): initial time. Defaults to 0.0.

    Returns:
        RadialGraphState: the seeded state

    Raises:
        ValueError: both or neither of `modes` and `expression` given, or modes on another axis dimension
    """
    if (modes is None) == (expression is None):
        raise ValueError("seed_state needs exactly one of modes or expression")
    state = RadialGraphState.zeros(dims, config, tau)
    points = state.points
    if modes is not None:
        if modes.k != dims.k:
            raise ValueError(f"seed modes live on k={modes.k}, dims have k={dims.k}")
        values = modes(points)
    else:
        values = compile_expression(expression, dims.k)(points)  # type: ignore[arg-type]
    if cutoff_radius is not None:
        if cutoff_radius > config.R_dom:
            raise ValueError(f"cutoff radius {cutoff_radius} exceeds R_dom={config.R_dom}")
        values = values * cutoff(points, cutoff_radius)
    logger.debug(f"seeded state with sup|u0| = {np.max(np.abs(values)):.6g}")
    return state.with_values(values, tau)
