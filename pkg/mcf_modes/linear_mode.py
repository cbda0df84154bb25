"""Linear-dominant regime: leading-mode ODE, asymptotic invariants (ā, b̄) and their laws."""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from mcf_modes.ode import IntegrationError, integrate_fixed
from mcf_modes.taylor import SQRT2, LeadingModes, q2_leading
from mcf_modes.types import FloatArray, PathLike, TauSpan
from mcf_modes.utils import ModeLabError, write_json

logger = logging.getLogger(__name__)

DOMINANCE_RATIO = 0.1


class NotLinearDominantError(ModeLabError):
    """exceptions thrown when a trajectory is dominated by the quadratic mode."""

    pass


class FitError(ModeLabError):
    """exceptions thrown by degenerate asymptotic fits."""

    pass


@dataclass(frozen=True, eq=False)
class LinearAsymptotics:
    """Asymptotic coefficients of U⁺(τ) = Σb̄ᵢe^(τ/2)𝔭⁽¹⁾ᵢ + (ā − ½|b̄|²τ)e^τ𝔭⁽⁰⁾ − (1/√2)Σb̄ᵢb̄ⱼe^τ𝔭⁽²⁾ᵢⱼ + ..."""

    a_bar: float
    b_bar: FloatArray
    residual: float = 0.0
    window: Tuple[float, float] = (math.nan, math.nan)

    def __post_init__(self) -> None:
        """Normalize and check finiteness."""
        b = np.array(self.b_bar, dtype=float).reshape(-1)
        if not (math.isfinite(self.a_bar) and np.all(np.isfinite(b))):
            raise ValueError("asymptotic coefficients must be finite")
        object.__setattr__(self, "a_bar", float(self.a_bar))
        object.__setattr__(self, "b_bar", b)

    @property
    def k(self) -> int:
        """Axis dimension."""
        return int(self.b_bar.size)

    @property
    def is_round_cylinder_type(self) -> bool:
        """b̄ = 0."""
        return not np.any(self.b_bar)

    def to_dict(self) -> Dict[str, Any]:
        """Serialize as {a_bar, b_bar, residual, window}."""
        return {
            "a_bar": self.a_bar,
            "b_bar": self.b_bar.tolist(),
            "residual": self.residual,
            "window": list(self.window),
        }


@dataclass
class LeadingTrajectory:
    """Sampled leading modes; `values` rows are `LeadingModes.to_vector` layouts."""

    k: int
    taus: FloatArray
    values: FloatArray = field(repr=False)

    def __len__(self) -> int:
        return int(self.taus.size)

    def modes(self, i: int) -> LeadingModes:
        """Leading modes of sample `i`."""
        return LeadingModes.from_vector(self.values[i], self.k)

    @property
    def a(self) -> FloatArray:
        """Constant-mode samples."""
        return self.values[:, 0]

    @property
    def b(self) -> FloatArray:
        """Linear-mode samples, shape (n, k)."""
        return self.values[:, 1 : 1 + self.k]

    @property
    def c(self) -> FloatArray:
        """Quadratic-mode matrices, shape (n, k, k)."""
        return np.array([self.modes(i).c for i in range(len(self))])

    @classmethod
    def from_modes(cls, taus: Sequence[float], modes: Sequence[LeadingModes]) -> "LeadingTrajectory":
        """Stack leading modes sampled at `taus`."""
        if not modes:
            raise ValueError("no samples")
        return cls(modes[0].k, np.asarray(taus, dtype=float), np.array([m.to_vector() for m in modes]))

    def window(self, lo: float, hi: float) -> "LeadingTrajectory":
        """Samples with lo <= τ <= hi."""
        keep = (self.taus >= lo) & (self.taus <= hi)
        return LeadingTrajectory(self.k, self.taus[keep], self.values[keep])


def leading_ode_rhs(u: LeadingModes) -> LeadingModes:
    """Model ODE of the leading modes with the O(e^(1.2τ)) forcing dropped.

    ∂a = a − ½a² − ½|b|² − ½|c|², ∂b = ½b − ab − √2cb, ∂c = −√2c² − bbᵀ/√2 − ac.

    Args:
        u (LeadingModes): current (a, b, c)

    Returns:
        LeadingModes: time derivative
    """
    linear = LeadingModes(u.a, 0.5 * u.b, np.zeros_like(u.c))
    return linear + q2_leading(u)


def integrate_leading(
    u0: LeadingModes, tau_span: TauSpan, dt: float = 0.01
) -> LeadingTrajectory:
    """Integrate the leading-mode ODE with fixed-step RK4.

    Args:
        u0 (LeadingModes): initial modes at tau_span[0]
        tau_span (TauSpan): (tau_start, tau_end), either direction
        dt (float, optional): maximal step. Defaults to 0.01.

    Returns:
        LeadingTrajectory: samples at every step

    Raises:
        IntegrationError: some mode exceeded 1 in magnitude
    """
    k = u0.k

    def f(t: float, y: FloatArray) -> FloatArray:
        return leading_ode_rhs(LeadingModes.from_vector(y, k)).to_vector()

    result = integrate_fixed(f, u0.to_vector(), tau_span, dt, guard=lambda y: bool(np.max(np.abs(y)) > 1.0))
    if result.stopped_at is not None:
        raise IntegrationError(f"leading modes left |U| <= 1 at tau={result.stopped_at:.6g}")
    return LeadingTrajectory(k, result.t, result.y)


def ansatz_modes(asym: LinearAsymptotics, tau: float) -> LeadingModes:
    """Leading modes of the asymptotic expansion at time τ."""
    b = asym.b_bar
    e = math.exp(tau)
    return LeadingModes(
        (asym.a_bar - 0.5 * float(b @ b) * tau) * e,
        b * math.exp(0.5 * tau),
        -np.outer(b, b) * e / SQRT2,
    )


def ansatz_trajectory(asym: LinearAsymptotics, taus: Sequence[float]) -> LeadingTrajectory:
    """Manufactured trajectory from the asymptotic expansion (no remainder)."""
    return LeadingTrajectory.from_modes(taus, [ansatz_modes(asym, float(t)) for t in taus])


def _quadratic_share(traj: LeadingTrajectory) -> float:
    u0 = np.linalg.norm(traj.c.reshape(len(traj), -1), axis=1)
    u12 = np.linalg.norm(traj.b, axis=1)
    u1 = np.abs(traj.a)
    quadratic = (u0 > 0) & (u12 <= DOMINANCE_RATIO * u0) & (u1 <= DOMINANCE_RATIO * u0)
    return float(np.mean(quadratic))


def _fit_residual(traj: LeadingTrajectory, asym: LinearAsymptotics) -> float:
    return max(
        (traj.modes(i) - ansatz_modes(asym, float(t))).max_abs() for i, t in enumerate(traj.taus)
    )


def extract_asymptotics(
    traj: LeadingTrajectory, window: Optional[Tuple[float, float]] = None
) -> LinearAsymptotics:
    """Fit (ā, b̄) to a linear-dominant trajectory.

    Linear least squares on β = be^(−τ/2) ≈ b̄ and α = ae^(−τ) ≈ ā + sτ with a
    free slope s, followed by one Gauss–Newton pass with s = −½|b̄|².

    Args:
        traj (LeadingTrajectory): samples, typically at τ ≪ 0
        window (Optional[Tuple[float, float]], optional): fit window. Defaults to the whole trajectory.

    Returns:
        LinearAsymptotics: coefficients with the max deviation from the expansion over the window

    Raises:
        NotLinearDominantError: most samples are quadratic-dominant
        FitError: fewer than two samples in the window
    """
    if window is not None:
        traj = traj.window(*window)
    if len(traj) < 2:
        raise FitError(f"need at least two samples to fit, got {len(traj)}")
    span = (float(traj.taus[0]), float(traj.taus[-1]))
    if not np.any(traj.values):
        return LinearAsymptotics(0.0, np.zeros(traj.k), 0.0, span)
    share = _quadratic_share(traj)
    if share > 0.5:
        raise NotLinearDominantError(
            f"{share:.0%} of samples are quadratic-dominant; not a linear-mode trajectory"
        )

    taus = traj.taus
    beta = traj.b * np.exp(-0.5 * taus)[:, None]
    alpha = traj.a * np.exp(-taus)
    b_bar = beta.mean(axis=0)
    design = np.column_stack([np.ones_like(taus), taus])
    (a_bar, _slope), *_ = np.linalg.lstsq(design, alpha, rcond=None)

    # Gauss–Newton pass on r = [β − b̄; α − ā + ½|b̄|²τ]
    k, n = traj.k, taus.size
    residual = np.concatenate([(beta - b_bar).reshape(-1), alpha - a_bar + 0.5 * float(b_bar @ b_bar) * taus])
    jac = np.zeros((n * k + n, 1 + k))
    for i in range(k):
        jac[i : n * k : k, 1 + i] = -1.0
    jac[n * k :, 0] = -1.0
    jac[n * k :, 1:] = taus[:, None] * b_bar[None, :]
    step, *_ = np.linalg.lstsq(jac, -residual, rcond=None)
    a_bar = float(a_bar + step[0])
    b_bar = b_bar + step[1:]

    asym = LinearAsymptotics(a_bar, b_bar, 0.0, span)
    fitted = LinearAsymptotics(a_bar, b_bar, _fit_residual(traj, asym), span)
    logger.debug(f"fitted a_bar={fitted.a_bar:.12g} b_bar={fitted.b_bar} on {span}, residual {fitted.residual:.3g}")
    return fitted


def transform_asymptotics(
    asym: LinearAsymptotics,
    alpha: float = 1.0,
    p: Optional[Sequence[float]] = None,
    dT: float = 0.0,
) -> LinearAsymptotics:
    """Apply a basepoint shift (p, dT) and then a parabolic rescaling by α.

    Shift: ā ↦ ā − (1/√2)Σb̄ⱼpⱼ + ½dT. Scaling: b̄ ↦ αb̄, ā ↦ α²ā − |b̄|²α²log α.

    Args:
        asym (LinearAsymptotics): coefficients
        alpha (float, optional): scale factor. Defaults to 1.0.
        p (Optional[Sequence[float]], optional): axis shift of the basepoint. Defaults to zero.
        dT (float, optional): time shift of the basepoint. Defaults to 0.0.

    Returns:
        LinearAsymptotics: transformed coefficients

    Raises:
        ValueError: alpha <= 0 or p of the wrong length
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    shift = np.zeros(asym.k) if p is None else np.asarray(p, dtype=float)
    if shift.shape != (asym.k,):
        raise ValueError(f"p must have {asym.k} entries")
    b = asym.b_bar
    a_shifted = asym.a_bar - float(b @ shift) / SQRT2 + 0.5 * dT
    b2 = float(b @ b)
    a_scaled = alpha**2 * a_shifted - b2 * alpha**2 * math.log(alpha)
    return LinearAsymptotics(a_scaled, alpha * b, asym.residual, asym.window)


def bowl_constant() -> float:
    """b̄ₖ of the translating bowl factor, 1/√2."""
    return math.sqrt(0.5)


def bowl_fixed_point(b_k: float, dT: float, a_bar: float = 0.0, atol: float = 1e-12) -> bool:
    """Whether the combined shift (dT·eₖ, dT) leaves ā unchanged for b̄ = b_k·eₖ."""
    asym = LinearAsymptotics(a_bar, [b_k])
    moved = transform_asymptotics(asym, 1.0, [dT], dT)
    return abs(moved.a_bar - asym.a_bar) <= atol


def write_asymptotics_report(asym: LinearAsymptotics, path: PathLike):
    """Write {a_bar, b_bar, residual, window} as JSON."""
    return write_json(path, asym.to_dict())
