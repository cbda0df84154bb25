"""Runge–Kutta helpers shared by the PDE and the mode ODEs."""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from mcf_modes.types import FloatArray
from mcf_modes.utils import ModeLabError

logger = logging.getLogger(__name__)

VectorField = Callable[[float, FloatArray], FloatArray]


class IntegrationError(ModeLabError):
    """exceptions thrown when an ODE integration fails."""

    pass


def rk4_step(f: VectorField, t: float, y: FloatArray, h: float) -> FloatArray:
    """One classical fourth-order Runge–Kutta step."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class FixedStepResult:
    """Samples of a fixed-step integration; `stopped_at` is set when the guard tripped."""

    t: FloatArray
    y: FloatArray
    stopped_at: Optional[float] = None


def integrate_fixed(
    f: VectorField,
    y0: FloatArray,
    t_span: Sequence[float],
    dt: float,
    guard: Optional[Callable[[FloatArray], bool]] = None,
) -> FixedStepResult:
    """Integrate with classical RK4 at (at most) step `dt`.

    The step is shrunk uniformly so the final time is hit exactly; integration
    runs backward when t_span is decreasing.

    Args:
        f (VectorField): right-hand side f(t, y)
        y0 (FloatArray): initial state
        t_span (Sequence[float]): (t0, t1)
        dt (float): maximal step size
        guard (Optional[Callable[[FloatArray], bool]], optional): returns True when the state left the valid region. Defaults to None.

    Returns:
        FixedStepResult: times (n+1,) and states (n+1, dim)
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n_steps = max(1, int(np.ceil(abs(t1 - t0) / dt - 1e-12)))
    h = (t1 - t0) / n_steps
    ts: List[float] = [t0]
    ys: List[FloatArray] = [np.array(y0, dtype=float)]
    y = ys[0]
    for i in range(n_steps):
        t = t0 + i * h
        y = rk4_step(f, t, y, h)
        ts.append(t0 + (i + 1) * h)
        ys.append(y)
        if guard is not None and guard(y):
            logger.debug(f"fixed-step integration stopped by guard at t={ts[-1]}")
            return FixedStepResult(np.array(ts), np.array(ys), ts[-1])
    return FixedStepResult(np.array(ts), np.array(ys))


def integrate_adaptive(
    f: VectorField,
    y0: FloatArray,
    t_span: Sequence[float],
    rtol: float = 1e-10,
    atol: float = 1e-20,
    events: Optional[Sequence[Callable]] = None,
    max_step: float = np.inf,
):
    """Embedded Runge–Kutta 4(5) integration with dense output.

    Args:
        f (VectorField): right-hand side f(t, y)
        y0 (FloatArray): initial state
        t_span (Sequence[float]): (t0, t1), either direction
        rtol (float, optional): relative tolerance. Defaults to 1e-10.
        atol (float, optional): absolute tolerance. Defaults to 1e-20.
        events (Optional[Sequence[Callable]], optional): terminal event functions. Defaults to None.
        max_step (float, optional): step size limit. Defaults to np.inf.

    Returns:
        OdeResult: scipy result with `sol` dense interpolant
    """
    sol = solve_ivp(
        f,
        t_span=(float(t_span[0]), float(t_span[1])),
        y0=np.asarray(y0, dtype=float),
        method="RK45",
        dense_output=True,
        rtol=rtol,
        atol=atol,
        events=list(events) if events else None,
        max_step=max_step,
    )
    if sol.status == -1:
        raise IntegrationError(f"adaptive integration failed: {sol.message}")
    return sol
