"""Method-of-lines solver for the rotationally symmetric rescaled MCF graph equation."""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, List, Optional, Tuple

import numpy as np
from scipy.linalg import solve_banded
from tqdm.auto import tqdm

from mcf_modes.hermite.basis import Dimensions
from mcf_modes.ode import rk4_step
from mcf_modes.pde.grid import RadialGraphState, SolverConfig, axis_coordinates, boundary_mask
from mcf_modes.types import FloatArray, TauSpan
from mcf_modes.utils import ModeLabError

logger = logging.getLogger(__name__)

# ARS(2,2,2) coefficients
GAMMA = 1.0 - 1.0 / math.sqrt(2.0)
DELTA = 1.0 - 1.0 / (2.0 * GAMMA)


class GeometricDegenerationError(ModeLabError):
    """exceptions thrown when the graph radius 1 + u stops being positive."""

    pass


class BlowUpError(ModeLabError):
    """exceptions thrown when |u| + |∇u| exceeds the blow-up guard."""

    pass


class LinearSolveError(ModeLabError):
    """exceptions thrown when an implicit tridiagonal solve fails."""

    pass


@dataclass(frozen=True, eq=False)
class DriftLaplacian1D:
    """Banded discretization of ∂² − ½x∂ along one axis.

    Rows store (upper, diagonal, lower) in the layout of `scipy.linalg.solve_banded`.
    The second difference vanishes on boundary rows (linear extrapolation) and the
    drift is upwinded within `upwind_band` of the boundary.
    """

    bands: FloatArray = field(repr=False)

    @classmethod
    def build(cls, h: float, R_dom: float, upwind_band: float) -> "DriftLaplacian1D":
        """Assemble the operator for a grid."""
        return _drift_laplacian(h, R_dom, upwind_band)

    @property
    def size(self) -> int:
        """Number of nodes."""
        return int(self.bands.shape[1])

    def apply(self, values: FloatArray, axis: int = 0) -> FloatArray:
        """Apply the operator along one axis of a grid array."""
        u = np.moveaxis(values, axis, 0)
        upper, diag, lower = self.bands
        out = diag.reshape((-1,) + (1,) * (u.ndim - 1)) * u
        out[:-1] += upper[1:].reshape((-1,) + (1,) * (u.ndim - 1)) * u[1:]
        out[1:] += lower[:-1].reshape((-1,) + (1,) * (u.ndim - 1)) * u[:-1]
        return np.moveaxis(out, 0, axis)

    def solve_shifted(self, coeff: float, rhs: FloatArray, axis: int = 0) -> FloatArray:
        """Solve (I − coeff·A) y = rhs along one axis.

        Raises:
            LinearSolveError: singular or non-finite system
        """
        ab = -coeff * self.bands
        ab[1] += 1.0
        b = np.moveaxis(rhs, axis, 0)
        shape = b.shape
        try:
            y = solve_banded((1, 1), ab, b.reshape(shape[0], -1), check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise LinearSolveError(f"tridiagonal solve failed: {e}") from e
        return np.moveaxis(y.reshape(shape), 0, axis)


@lru_cache(maxsize=16)
def _drift_laplacian(h: float, R_dom: float, upwind_band: float) -> DriftLaplacian1D:
    x = axis_coordinates(h, R_dom)
    n = x.size
    upper = np.zeros(n)
    diag = np.zeros(n)
    lower = np.zeros(n)
    inv_h2 = 1.0 / h**2
    # interior second difference
    diag[1:-1] = -2.0 * inv_h2
    for i in range(1, n - 1):
        upper[i + 1] += inv_h2
        lower[i - 1] += inv_h2
    # drift −½x∂u: central in the core, upwinded near the boundary
    for i in range(n):
        v = -0.5 * x[i]
        core = abs(x[i]) <= R_dom - upwind_band and 0 < i < n - 1
        if core:
            upper[i + 1] += v / (2.0 * h)
            lower[i - 1] -= v / (2.0 * h)
        elif x[i] > 0:
            diag[i] += v / h
            lower[i - 1] -= v / h
        else:
            diag[i] -= v / h
            upper[i + 1] += v / h
    bands = np.stack([upper, diag, lower])
    bands.setflags(write=False)
    return DriftLaplacian1D(bands)


def _padded(values: FloatArray, axis: int) -> FloatArray:
    # odd reflection puts the ghost at 2u₀ − u₁ (linear extrapolation)
    pad = [(0, 0)] * values.ndim
    pad[axis] = (1, 1)
    return np.pad(values, pad, mode="reflect", reflect_type="odd")


def _central(values: FloatArray, h: float, axis: int) -> FloatArray:
    p = np.moveaxis(_padded(values, axis), axis, 0)
    return np.moveaxis((p[2:] - p[:-2]) / (2.0 * h), 0, axis)


def _second(values: FloatArray, h: float, axis: int) -> FloatArray:
    p = np.moveaxis(_padded(values, axis), axis, 0)
    return np.moveaxis((p[2:] - 2.0 * p[1:-1] + p[:-2]) / h**2, 0, axis)


def derivatives(values: FloatArray, h: float) -> Tuple[FloatArray, FloatArray]:
    """Central-difference gradient (..., k) and Hessian (..., k, k) on the grid.

    Args:
        values (FloatArray): grid values, shape (N,)*k
        h (float): grid spacing

    Returns:
        Tuple[FloatArray, FloatArray]: gradient and Hessian
    """
    k = values.ndim
    grad = np.stack([_central(values, h, a) for a in range(k)], axis=-1)
    hess = np.empty(values.shape + (k, k))
    for a in range(k):
        hess[..., a, a] = _second(values, h, a)
        for b in range(a + 1, k):
            mixed = _central(grad[..., a], h, b)
            hess[..., a, b] = hess[..., b, a] = mixed
    return grad, hess


def nonlinear_term(
    u: FloatArray, grad: FloatArray, hess: FloatArray, dims: Dimensions
) -> FloatArray:
    """Pointwise −½u²/(1+u) − ∇²u(∇u,∇u)/((2(n−k))⁻¹ + |∇u|²).

    Args:
        u (FloatArray): values
        grad (FloatArray): gradients, shape u.shape + (k,)
        hess (FloatArray): Hessians, shape u.shape + (k, k)
        dims (Dimensions): dimensions

    Returns:
        FloatArray: the nonlinearity, shape u.shape
    """
    hgg = np.einsum("...i,...ij,...j->...", grad, hess, grad)
    grad2 = np.einsum("...i,...i->...", grad, grad)
    return -0.5 * u**2 / (1.0 + u) - hgg / (1.0 / (2.0 * dims.codim) + grad2)


class _Discretization:
    """Operators and checks for one (dims, config) pair."""

    def __init__(self, dims: Dimensions, config: SolverConfig) -> None:
        self.dims = dims
        self.config = config
        self.operator = DriftLaplacian1D.build(config.h, config.R_dom, config.upwind_band)
        shape = (config.nodes_per_axis,) * dims.k
        self.boundary = boundary_mask(shape)
        self.axis = axis_coordinates(config.h, config.R_dom)

    def drift_laplacian(self, values: FloatArray) -> FloatArray:
        return sum(  # type: ignore[return-value]
            self.operator.apply(values, a) for a in range(values.ndim)
        )

    def check_geometry(self, values: FloatArray, tau: float) -> None:
        radius = 1.0 + values
        if np.any(radius <= 0.0) or not np.all(np.isfinite(values)):
            safe = np.where(np.isfinite(radius), radius, -np.inf)
            idx = np.unravel_index(int(np.argmin(safe)), values.shape)
            x = tuple(float(self.axis[i]) for i in idx)
            raise GeometricDegenerationError(
                f"graph radius 1+u = {radius[idx]:.6g} at x={x}, tau={tau:.6g}"
            )

    def explicit(self, values: FloatArray, tau: float) -> FloatArray:
        self.check_geometry(values, tau)
        grad, hess = derivatives(values, self.config.h)
        return values + nonlinear_term(values, grad, hess, self.dims)

    def full(self, values: FloatArray, tau: float) -> FloatArray:
        return self.drift_laplacian(values) + self.explicit(values, tau)

    def implicit_solve(self, coeff: float, b: FloatArray) -> FloatArray:
        # delta form y = b + Δ with an ADI-factored (I − coeff·A)Δ = coeff·A b
        delta = coeff * self.drift_laplacian(b)
        for a in range(b.ndim):
            delta = self.operator.solve_shifted(coeff, delta, a)
        return b + delta

    def check_guard(self, values: FloatArray, tau: float) -> None:
        grad, _ = derivatives(values, self.config.h)
        size = np.abs(values) + np.sqrt(np.sum(grad**2, axis=-1))
        worst = float(np.max(size))
        if not math.isfinite(worst) or worst > self.config.blowup_guard:
            raise BlowUpError(
                f"|u| + |grad u| = {worst:.6g} exceeds guard {self.config.blowup_guard} at tau={tau:.6g}"
            )


@lru_cache(maxsize=16)
def _discretization(dims: Dimensions, config: SolverConfig) -> _Discretization:
    return _Discretization(dims, config)


def rhs(state: RadialGraphState, config: Optional[SolverConfig] = None) -> FloatArray:
    """Right-hand side Δ_f u + u − ½u²/(1+u) − ∇²u(∇u,∇u)/((2(n−k))⁻¹ + |∇u|²).

    Args:
        state (RadialGraphState): current state
        config (Optional[SolverConfig], optional): discretization settings. Defaults to the state's grid with default settings.

    Returns:
        FloatArray: time derivative at every node

    Raises:
        GeometricDegenerationError: 1 + u <= 0 somewhere
    """
    config = _matching_config(state, config)
    return _discretization(state.dims, config).full(state.values, state.tau)


def _matching_config(state: RadialGraphState, config: Optional[SolverConfig]) -> SolverConfig:
    if config is None:
        return SolverConfig(h=state.h, R_dom=state.R_dom)
    if not (math.isclose(config.h, state.h) and math.isclose(config.R_dom, state.R_dom)):
        raise ValueError(
            f"state grid (h={state.h}, R_dom={state.R_dom}) does not match config "
            f"(h={config.h}, R_dom={config.R_dom})"
        )
    return config


def step(
    state: RadialGraphState, config: SolverConfig, dt: Optional[float] = None
) -> RadialGraphState:
    """Advance one time step.

    IMEX treats Δ_f implicitly with tensorized tridiagonal solves and the rest
    explicitly (ARS(2,2,2)); RK4 is fully explicit.

    Args:
        state (RadialGraphState): current state
        config (SolverConfig): solver settings
        dt (Optional[float], optional): step size override. Defaults to config.dt.

    Returns:
        RadialGraphState: state at tau + dt

    Raises:
        ValueError: explicit step above the stability bound
        GeometricDegenerationError: 1 + u <= 0
        BlowUpError: guard tripped after the step
        LinearSolveError: implicit solve failed
    """
    config = _matching_config(state, config)
    h_t = config.dt if dt is None else dt
    disc = _discretization(state.dims, config)
    u = state.values
    if config.scheme == "rk4":
        bound = config.explicit_dt_bound(state.k)
        if h_t > bound * (1 + 1e-12):
            raise ValueError(f"dt={h_t} exceeds the explicit bound {bound:.6g}")
        new = rk4_step(lambda t, y: disc.full(y, t), state.tau, u, h_t)
    else:
        e1 = disc.explicit(u, state.tau)
        y2 = disc.implicit_solve(GAMMA * h_t, u + h_t * GAMMA * e1)
        e2 = disc.explicit(y2, state.tau + GAMMA * h_t)
        b3 = (
            u
            + h_t * (DELTA * e1 + (1.0 - DELTA) * e2)
            + h_t * (1.0 - GAMMA) * disc.drift_laplacian(y2)
        )
        new = disc.implicit_solve(GAMMA * h_t, b3)
    if config.boundary == "frozen":
        new[disc.boundary] = u[disc.boundary]
    tau = state.tau + h_t
    disc.check_geometry(new, tau)
    disc.check_guard(new, tau)
    return state.with_values(new, tau)


@dataclass
class Trajectory:
    """Decimated sequence of states of one simulation."""

    config: SolverConfig
    states: List[RadialGraphState] = field(default_factory=list)

    @property
    def taus(self) -> FloatArray:
        """Snapshot times."""
        return np.array([s.tau for s in self.states])

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self) -> Iterator[RadialGraphState]:
        return iter(self.states)

    def __getitem__(self, i: int) -> RadialGraphState:
        return self.states[i]


def simulate(
    u0: RadialGraphState,
    tau_span: TauSpan,
    config: SolverConfig,
    snapshot_every: int = 10,
    quiet: bool = True,
) -> Trajectory:
    """Run repeated steps from `u0` and keep every `snapshot_every`-th state.

    The step is shrunk uniformly so the span is covered exactly; the initial and
    final states are always kept.

    Args:
        u0 (RadialGraphState): initial state at tau_span[0]
        tau_span (TauSpan): (tau_start, tau_end)
        config (SolverConfig): solver settings
        snapshot_every (int, optional): step cadence of snapshots. Defaults to 10.
        quiet (bool, optional): disable progress bar. Defaults to True.

    Returns:
        Trajectory: decimated states
    """
    tau0, tau1 = float(tau_span[0]), float(tau_span[1])
    if tau1 <= tau0:
        raise ValueError(f"tau span must increase, got {tau_span}")
    if snapshot_every < 1:
        raise ValueError("snapshot_every must be positive")
    config = _matching_config(u0, config)
    config.check_stability(u0.k)
    n_steps = max(1, int(math.ceil((tau1 - tau0) / config.dt - 1e-9)))
    dt = (tau1 - tau0) / n_steps
    logger.info(
        f"simulating n={u0.dims.n} k={u0.k} on tau in [{tau0}, {tau1}] with "
        f"{n_steps} {config.scheme} steps of {dt:.6g}"
    )
    state = u0.with_values(u0.values.copy(), tau0)
    trajectory = Trajectory(config, [state])
    for i in tqdm(range(1, n_steps + 1), desc="time stepping", disable=quiet):
        state = step(state, config, dt)
        state = state.with_values(state.values, tau0 + i * dt)
        if i % snapshot_every == 0 or i == n_steps:
            trajectory.states.append(state)
    logger.debug(f"kept {len(trajectory)} snapshots, final sup|u| = {state.sup_norm():.6g}")
    return trajectory


def core_slice(axis: FloatArray, radius: float, k: int) -> Tuple[slice, ...]:
    """Index slices of the cube |x_i| <= radius."""
    inside = np.nonzero(np.abs(axis) <= radius + 1e-12)[0]
    s = slice(int(inside[0]), int(inside[-1]) + 1)
    return (s,) * k

