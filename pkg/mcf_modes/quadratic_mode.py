"""Quadratic-dominant regime: the matrix ODE for Ū, its spectral reduction and the invariant Q."""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from mcf_modes.constants import DerivedConstants, derive_constants
from mcf_modes.hermite.basis import Dimensions
from mcf_modes.linear_mode import FitError
from mcf_modes.ode import integrate_adaptive, integrate_fixed
from mcf_modes.taylor import SQRT2, LeadingModes, bar_q
from mcf_modes.types import FloatArray, MatrixLike, PathLike, SymMatrixK, TauSpan
from mcf_modes.utils import ModeLabError, as_sym_matrix, write_json

logger = logging.getLogger(__name__)

BISECTION_TOL = 1e-10
EXTENSION_CHUNK = 100.0
MAX_EXTENSIONS = 40
BLOWUP_GUARD = 10.0
ZERO_TOL = 1e-14
SPECTRAL_RTOL = 1e-12
FIT_TAU_MAX = -1e4
FIT_TAU_MIN = -1e5
MIN_DECAY_EXPONENT = 2.5
RESIDUAL_FLOOR = 1e-10

DenseOutput = Callable[[float], FloatArray]


class ThresholdNotCrossedError(ModeLabError):
    """exceptions thrown when a nonzero trajectory never reaches the Q threshold."""

    pass


def threshold(cstar: float) -> float:
    """Threshold c = min{0.05, (10(1 + |C*|))⁻¹}."""
    return min(0.05, 1.0 / (10.0 * (1.0 + abs(cstar))))


def predicted_cstarstar(rank: int, cstar: float) -> float:
    """Logarithmic coefficient −(2·rank + C*)/√2 of 1/λ for a rank-`rank` solution."""
    return -(2.0 * rank + cstar) / SQRT2


@dataclass(frozen=True)
class BarUSystem:
    """Matrix ODE ∂Ū = −√2Ū² + 2tr(Ū²)Ū + C*Ū³ for given dimensions."""

    dims: Dimensions
    cstar: float
    guard: float = BLOWUP_GUARD

    @classmethod
    def for_dims(
        cls, dims: Dimensions, constants: Optional[DerivedConstants] = None
    ) -> "BarUSystem":
        """System with C* derived for n − k."""
        constants = constants or derive_constants(dims)
        return cls(dims, constants.Cstar)

    @property
    def k(self) -> int:
        """Matrix size."""
        return self.dims.k

    @property
    def c(self) -> float:
        """Threshold of the Q construction."""
        return threshold(self.cstar)

    def eig_rhs(self, tau: float, lam: FloatArray) -> FloatArray:
        """Spectral-value ODE ∂λᵢ = −√2λᵢ² + 2(Σλⱼ²)λᵢ + C*λᵢ³."""
        return -SQRT2 * lam**2 + 2.0 * float(np.dot(lam, lam)) * lam + self.cstar * lam**3

    def matrix_rhs(self, tau: float, flat: FloatArray) -> FloatArray:
        """Full matrix ODE on flattened k×k input."""
        u = flat.reshape(self.k, self.k)
        return bar_q(u, self.cstar).reshape(-1)


def spectral_reduce(u0: MatrixLike) -> Tuple[FloatArray, FloatArray]:
    """Orthogonal diagonalization with descending eigenvalues and sign-fixed columns.

    Diagonal input is reduced by a stable permutation, so a diagonal with
    non-increasing entries gives the identity frame. Columns are signed so their
    first nonzero component is positive.

    Args:
        u0 (MatrixLike): symmetric matrix

    Returns:
        Tuple[FloatArray, FloatArray]: frame (columns are eigenvectors) and eigenvalues
    """
    u = as_sym_matrix(u0, "U0")
    k = u.shape[0]
    if not np.any(u - np.diag(np.diag(u))):
        order = np.argsort(-np.diag(u), kind="stable")
        return np.eye(k)[:, order], np.diag(u)[order].copy()
    eigs, vecs = np.linalg.eigh(u)
    order = np.argsort(-eigs, kind="stable")
    eigs, vecs = eigs[order], vecs[:, order]
    for j in range(k):
        col = vecs[:, j]
        first = col[np.argmax(np.abs(col) > 1e-12)]
        if first < 0:
            vecs[:, j] = -col
    scale = max(1.0, float(np.max(np.abs(eigs))))
    eigs[np.abs(eigs) <= ZERO_TOL * scale] = 0.0
    return vecs, eigs


@dataclass(frozen=True)
class _Segment:
    lo: float
    hi: float
    dense: Optional[DenseOutput]


@dataclass
class SpectralTrajectory:
    """Ū(τ) = F diag(λ(τ)) Fᵀ with a frame F fixed in time."""

    system: BarUSystem
    frame: FloatArray
    taus: FloatArray
    lambdas: FloatArray = field(repr=False)
    segments: List[_Segment] = field(default_factory=list, repr=False)
    blowup_tau: Optional[float] = None
    method: str = "rk45"
    dt: float = 0.01

    @property
    def k(self) -> int:
        """Matrix size."""
        return int(self.frame.shape[0])

    @property
    def span(self) -> Tuple[float, float]:
        """Covered time interval."""
        return float(self.taus[0]), float(self.taus[-1])

    @property
    def is_zero(self) -> bool:
        """Identically zero trajectory."""
        return not np.any(self.lambdas)

    def at(self, tau: float) -> FloatArray:
        """Spectral values at τ (dense output, or linear interpolation for RK4)."""
        lo, hi = self.span
        if not lo - 1e-12 <= tau <= hi + 1e-12:
            raise ValueError(f"tau={tau} outside the trajectory span [{lo}, {hi}]")
        if self.is_zero:
            return np.zeros(self.k)
        for seg in self.segments:
            if seg.dense is not None and seg.lo - 1e-12 <= tau <= seg.hi + 1e-12:
                return np.asarray(seg.dense(tau), dtype=float)
        return np.array([np.interp(tau, self.taus, self.lambdas[:, i]) for i in range(self.k)])

    def matrix(self, tau: float) -> SymMatrixK:
        """Ū(τ)."""
        m = self.frame @ np.diag(self.at(tau)) @ self.frame.T
        return 0.5 * (m + m.T)

    def lambda_min(self, tau: float) -> float:
        """Smallest spectral value at τ."""
        return float(np.min(self.at(tau)))

    def extend(self, tau: float) -> "SpectralTrajectory":
        """Trajectory covering `tau` by integrating on from the nearest end."""
        lo, hi = self.span
        if self.is_zero:
            return _zero_trajectory(self.system, self.frame, (min(lo, tau), max(hi, tau)))
        if lo <= tau <= hi:
            return self
        if tau > hi:
            if self.blowup_tau is not None:
                return self
            more = _integrate_eigs(self.lambdas[-1], (hi, tau), self.system, self.method, self.dt)
            return SpectralTrajectory(
                self.system,
                self.frame,
                np.concatenate([self.taus, more.taus[1:]]),
                np.vstack([self.lambdas, more.lambdas[1:]]),
                self.segments + more.segments,
                more.blowup_tau,
                self.method,
                self.dt,
            )
        more = _integrate_eigs(self.lambdas[0], (lo, tau), self.system, self.method, self.dt)
        return SpectralTrajectory(
            self.system,
            self.frame,
            np.concatenate([more.taus[:-1], self.taus]),
            np.vstack([more.lambdas[:-1], self.lambdas]),
            more.segments + self.segments,
            self.blowup_tau,
            self.method,
            self.dt,
        )


@dataclass
class _EigRun:
    taus: FloatArray
    lambdas: FloatArray
    segments: List[_Segment]
    blowup_tau: Optional[float]


def _integrate_eigs(
    lam0: FloatArray, tau_span: TauSpan, system: BarUSystem, method: str, dt: float
) -> _EigRun:
    """Integrate spectral values; samples are returned in increasing τ."""
    t0, t1 = float(tau_span[0]), float(tau_span[1])
    lam0 = np.asarray(lam0, dtype=float)
    if method == "rk45":

        def blowup(t: float, y: FloatArray) -> float:
            return float(np.min(y)) + system.guard

        blowup.terminal = True  # type: ignore[attr-defined]
        blowup.direction = -1  # type: ignore[attr-defined]
        sol = integrate_adaptive(system.eig_rhs, lam0, (t0, t1), rtol=SPECTRAL_RTOL, events=[blowup])
        taus, lambdas = sol.t, sol.y.T
        blown = float(sol.t_events[0][0]) if len(sol.t_events[0]) else None
        seg = _Segment(min(taus[0], taus[-1]), max(taus[0], taus[-1]), sol.sol)
    elif method == "rk4":
        res = integrate_fixed(
            system.eig_rhs, lam0, (t0, t1), dt, guard=lambda y: bool(np.min(y) < -system.guard)
        )
        taus, lambdas, blown = res.t, res.y, res.stopped_at
        seg = _Segment(min(taus[0], taus[-1]), max(taus[0], taus[-1]), None)
    else:
        raise ValueError(f"method must be 'rk45' or 'rk4', got {method!r}")
    if blown is not None:
        logger.info(f"spectral values left [-{system.guard}, 0] at tau={blown:.6g} (maximal interval end)")
    if t1 < t0:
        taus, lambdas = taus[::-1], lambdas[::-1]
    return _EigRun(np.asarray(taus), np.asarray(lambdas), [seg], blown)


def _zero_trajectory(system: BarUSystem, frame: FloatArray, span: TauSpan) -> SpectralTrajectory:
    taus = np.array(sorted(span), dtype=float)
    return SpectralTrajectory(system, frame, taus, np.zeros((2, frame.shape[0])))


def integrate_barU(
    u0: MatrixLike,
    tau_span: TauSpan,
    system: BarUSystem,
    method: str = "rk45",
    dt: float = 0.01,
) -> SpectralTrajectory:
    """Integrate Ū from Ū(tau_span[0]) = u0 in its frozen eigenframe.

    Args:
        u0 (MatrixLike): non-positive definite k×k matrix
        tau_span (TauSpan): (tau_start, tau_end), either direction
        system (BarUSystem): ODE constants
        method (str, optional): "rk45" (adaptive 4(5) pair) or "rk4" (fixed step). Defaults to "rk45".
        dt (float, optional): step of the "rk4" method. Defaults to 0.01.

    Returns:
        SpectralTrajectory: trajectory, ending early at finite-time blow-up

    Raises:
        ValueError: u0 not non-positive definite or of the wrong size
    """
    frame, lam0 = spectral_reduce(u0)
    if frame.shape[0] != system.k:
        raise ValueError(f"U0 is {frame.shape[0]}x{frame.shape[0]}, system has k={system.k}")
    scale = max(1.0, float(np.max(np.abs(lam0))))
    if np.any(lam0 > ZERO_TOL * scale):
        raise ValueError(f"U0 must be non-positive definite, eigenvalues {lam0}")
    lam0 = np.minimum(lam0, 0.0)
    if not np.any(lam0):
        return _zero_trajectory(system, frame, tau_span)
    run = _integrate_eigs(lam0, tau_span, system, method, dt)
    return SpectralTrajectory(system, frame, run.taus, run.lambdas, run.segments, run.blowup_tau, method, dt)


def integrate_matrix(u0: MatrixLike, tau_span: TauSpan, system: BarUSystem):
    """Integrate the full k×k matrix ODE (cross-check of the spectral reduction)."""
    u = as_sym_matrix(u0, "U0")
    return integrate_adaptive(system.matrix_rhs, u.reshape(-1), tau_span)


@dataclass(frozen=True, eq=False)
class QInvariant:
    """Q = −c⁻¹e^(−τ_U/2)Ū(τ_U) with τ_U the time where λ_min(Ū) = −c."""

    Q: SymMatrixK
    tau_U: Optional[float]
    c: float
    cstar: float

    @property
    def k(self) -> int:
        """Matrix size."""
        return int(self.Q.shape[0])

    def to_dict(self) -> Dict[str, Any]:
        """Serialize."""
        return {
            "k": self.k,
            "c": self.c,
            "Cstar": self.cstar,
            "Q": self.Q.tolist(),
            "tau_U": self.tau_U,
        }


def _crossing(traj: SpectralTrajectory, c: float) -> Optional[Tuple[float, float]]:
    mins = np.min(traj.lambdas, axis=1)
    below = np.nonzero(mins <= -c)[0]
    if not below.size:
        return None
    j = int(below[0])
    if mins[j] == -c:
        return float(traj.taus[j]), float(traj.taus[j])
    if j == 0:
        return None
    return float(traj.taus[j - 1]), float(traj.taus[j])


def locate_threshold(
    traj: SpectralTrajectory, tol: float = BISECTION_TOL, chunk: float = EXTENSION_CHUNK
) -> Tuple[float, SpectralTrajectory]:
    """Time τ_U with λ_min(Ū(τ_U)) = −c, extending the trajectory as needed.

    Extensions start at `chunk` and double while no crossing is bracketed.

    Raises:
        ThresholdNotCrossedError: no crossing within the integrable range
    """
    c = traj.system.c
    step = chunk
    for _ in range(MAX_EXTENSIONS):
        mins = np.min(traj.lambdas, axis=1)
        bracket = _crossing(traj, c)
        if bracket is not None:
            lo, hi = bracket
            if lo == hi:
                return lo, traj
            tau_u = brentq(lambda t: traj.lambda_min(t) + c, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)
            return float(tau_u), traj
        lo, hi = traj.span
        if mins[0] <= -c:
            traj = traj.extend(lo - step)
        elif traj.blowup_tau is None:
            traj = traj.extend(hi + step)
        else:
            break
        step *= 2.0
    raise ThresholdNotCrossedError(
        f"lambda_min never crossed -c = {-c:.6g} on [{traj.span[0]:.6g}, {traj.span[1]:.6g}]"
    )


def q_invariant(traj: SpectralTrajectory, tol: float = BISECTION_TOL) -> QInvariant:
    """Invariant Q of a Ū trajectory; zero for the zero solution.

    Args:
        traj (SpectralTrajectory): trajectory (extended as needed)
        tol (float, optional): bisection tolerance in τ. Defaults to 1e-10.

    Returns:
        QInvariant: Q with τ_U and the threshold used

    Raises:
        ThresholdNotCrossedError: threshold never crossed
    """
    system = traj.system
    if traj.is_zero:
        return QInvariant(np.zeros((traj.k, traj.k)), None, system.c, system.cstar)
    tau_u, traj = locate_threshold(traj, tol)
    q = -math.exp(-tau_u / 2.0) / system.c * traj.matrix(tau_u)
    return QInvariant(0.5 * (q + q.T), tau_u, system.c, system.cstar)


def q_inverse(
    qp: MatrixLike,
    system: BarUSystem,
    backward: float = 100.0,
    forward: float = 1.0,
    method: str = "rk45",
) -> SpectralTrajectory:
    """Trajectory with Ū(−2 log a) = −c·a⁻¹·Q′, a the largest spectral value of Q′.

    Args:
        qp (MatrixLike): non-negative definite k×k matrix
        system (BarUSystem): ODE constants
        backward (float, optional): span integrated before the initial time. Defaults to 100.0.
        forward (float, optional): span integrated after it (stops at blow-up). Defaults to 1.0.
        method (str, optional): integrator. Defaults to "rk45".

    Returns:
        SpectralTrajectory: the trajectory; zero for Q′ = 0

    Raises:
        ValueError: Q′ not non-negative definite
    """
    q = as_sym_matrix(qp, "Q'")
    frame, eigs = spectral_reduce(q)
    scale = max(1.0, float(np.max(np.abs(eigs))))
    if np.any(eigs < -ZERO_TOL * scale):
        raise ValueError(f"Q' must be non-negative definite, eigenvalues {eigs}")
    a = float(eigs[0])
    if a <= 0.0:
        return _zero_trajectory(system, frame, (-backward, forward))
    tau0 = -2.0 * math.log(a)
    u0 = -system.c / a * q
    traj = integrate_barU(u0, (tau0, tau0 + forward), system, method)
    return traj.extend(tau0 - backward)


def embed(obj: Union[MatrixLike, SpectralTrajectory], k_new: int):
    """Zero-pad a matrix or a trajectory from k to k_new > k.

    Raises:
        ValueError: k_new < k
    """
    if isinstance(obj, SpectralTrajectory):
        k = obj.k
        if k_new < k:
            raise ValueError(f"cannot embed k={k} into k={k_new}")
        frame = np.eye(k_new)
        frame[:k, :k] = obj.frame
        system = BarUSystem(Dimensions(obj.system.dims.n + k_new - k, k_new), obj.system.cstar, obj.system.guard)
        lambdas = np.hstack([obj.lambdas, np.zeros((obj.lambdas.shape[0], k_new - k))])
        segments = [
            _Segment(s.lo, s.hi, None if s.dense is None else _padded_dense(s.dense, k_new - k))
            for s in obj.segments
        ]
        return SpectralTrajectory(system, frame, obj.taus.copy(), lambdas, segments, obj.blowup_tau, obj.method, obj.dt)
    m = as_sym_matrix(obj, "matrix")
    k = m.shape[0]
    if k_new < k:
        raise ValueError(f"cannot embed k={k} into k={k_new}")
    out = np.zeros((k_new, k_new))
    out[:k, :k] = m
    return out


def _padded_dense(dense: DenseOutput, extra: int) -> DenseOutput:
    return lambda t: np.concatenate([np.asarray(dense(t), dtype=float), np.zeros(extra)])


def ancient_seed(
    active: Sequence[bool], tau0: float, frame: Optional[MatrixLike] = None
) -> SymMatrixK:
    """Backward seed with spectral values 1/(√2τ₀) on the active directions.

    Args:
        active (Sequence[bool]): which frame directions carry a nonzero value
        tau0 (float): initial time, negative
        frame (Optional[MatrixLike], optional): orthogonal frame. Defaults to the identity.

    Returns:
        SymMatrixK: non-positive definite seed
    """
    if tau0 >= 0:
        raise ValueError(f"tau0 must be negative, got {tau0}")
    diag = np.array([1.0 / (SQRT2 * tau0) if on else 0.0 for on in active])
    f = np.eye(diag.size) if frame is None else np.asarray(frame, dtype=float)
    m = f @ np.diag(diag) @ f.T
    return 0.5 * (m + m.T)


@dataclass
class AsymptoticFit:
    """Fit of 1/λᵢ = log aᵢ + √2τ + C**·log(−τ) on the nonzero eigen-channels."""

    A: SymMatrixK
    Cstarstar: float
    channel_Cstarstar: List[float]
    residual: float
    decay_exponent: float
    channels: List[int]

    @property
    def channel_spread(self) -> float:
        """Largest relative deviation of a per-channel C** from the shared one."""
        return max(abs(c / self.Cstarstar - 1.0) for c in self.channel_Cstarstar)

    def to_dict(self) -> Dict[str, Any]:
        """Serialize."""
        return {
            "A": self.A.tolist(),
            "Cstarstar": self.Cstarstar,
            "channel_Cstarstar": self.channel_Cstarstar,
            "residual": self.residual,
            "decay_exponent": self.decay_exponent,
            "channels": self.channels,
        }


def decay_exponent(x: FloatArray, residuals: FloatArray, blocks: int = 8) -> float:
    """Exponent p of residual ~ x^(−p), fitted on block maxima over log-spaced blocks of x > 0."""
    x = np.asarray(x, dtype=float)
    r = np.abs(np.asarray(residuals, dtype=float))
    if not np.any(r > 0):
        return math.inf
    edges = np.geomspace(np.min(x), np.max(x), blocks + 1)
    centers, maxima = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        inside = (x >= lo) & (x <= hi) & (r > 0)
        if np.any(inside):
            centers.append(math.sqrt(lo * hi))
            maxima.append(float(np.max(r[inside])))
    if len(centers) < 2:
        raise FitError("not enough nonzero residual blocks to fit a decay exponent")
    slope, _ = np.polyfit(np.log(centers), np.log(maxima), 1)
    return float(-slope)


def _reciprocal_lstsq(blocks: List[FloatArray], targets: List[FloatArray]) -> FloatArray:
    """Least squares for stacked per-channel blocks sharing their last column."""
    design = np.vstack(blocks)
    scale = np.linalg.norm(design, axis=0)
    scale[scale == 0.0] = 1.0
    if np.linalg.matrix_rank(design / scale) < design.shape[1]:
        raise FitError("rank-deficient asymptotic fit")
    theta, *_ = np.linalg.lstsq(design / scale, np.concatenate(targets), rcond=None)
    return theta / scale


def fit_asymptotics(
    traj: SpectralTrajectory,
    tau_max: float = FIT_TAU_MAX,
    tau_min: float = FIT_TAU_MIN,
    min_exponent: Optional[float] = MIN_DECAY_EXPONENT,
) -> AsymptoticFit:
    """Fit Ū(τ) = (log A + (√2τ + C**log(−τ))I)⁻¹ on samples with tau_min <= τ <= tau_max.

    The fit is linear in 1/λᵢ − √2τ. Each channel carries its own log aᵢ and
    the correction terms log(−τ)/τ and 1/τ of the next order, C** is shared.
    Per-channel C** values come from the same model fitted channel by channel.
    The residual is that of the ansatz alone, measured on λ.

    Args:
        traj (SpectralTrajectory): trajectory resolved far into τ < 0
        tau_max (float, optional): latest time used. Defaults to -1e4.
        tau_min (float, optional): earliest time used. Defaults to -1e5.
        min_exponent (Optional[float], optional): required decay exponent of the residual, None to only report it.
            Defaults to 2.5.

    Returns:
        AsymptoticFit: A in the original frame, C**, max relative residual and its decay exponent in |τ|

    Raises:
        FitError: no nonzero channel, too few distinct samples, or a residual decaying slower than `min_exponent`
    """
    keep = (traj.taus <= tau_max) & (traj.taus >= tau_min)
    taus = traj.taus[keep]
    lambdas = traj.lambdas[keep]
    channels = [i for i in range(traj.k) if np.all(lambdas[:, i] < 0)] if taus.size else []
    if not channels:
        raise FitError("no nonzero eigen-channel to fit")
    if np.unique(taus).size < 4:
        raise FitError("need samples at four or more distinct times")
    logt = np.log(-taus)
    local = np.column_stack([np.ones_like(taus), logt / taus, 1.0 / taus])
    targets = [1.0 / lambdas[:, i] - SQRT2 * taus for i in channels]

    # unknowns: (log a, two corrections) per channel, then the shared C**
    r = len(channels)
    blocks = []
    for j in range(r):
        block = np.zeros((taus.size, 3 * r + 1))
        block[:, 3 * j : 3 * j + 3] = local
        block[:, -1] = logt
        blocks.append(block)
    theta = _reciprocal_lstsq(blocks, targets)
    log_a_fit = theta[0 : 3 * r : 3]
    cstarstar = float(theta[-1])
    per_channel = [
        float(_reciprocal_lstsq([np.column_stack([local, logt])], [target])[-1]) for target in targets
    ]

    model = ansatz_lambdas(taus, log_a_fit, cstarstar)
    observed = lambdas[:, channels]
    error = np.abs(model - observed)
    rel = (error / np.abs(observed)).max(axis=1)
    # residuals at the integration noise floor count as exact
    error[error <= RESIDUAL_FLOOR * np.abs(observed)] = 0.0
    try:
        exponent = decay_exponent(-taus, error.max(axis=1))
    except FitError:
        exponent = math.inf
    if min_exponent is not None and not exponent >= min_exponent:
        raise FitError(f"asymptotic residual decays like |tau|^-{exponent:.3g}, need at least {min_exponent}")

    a_diag = np.zeros(traj.k)
    for j, i in enumerate(channels):
        a_diag[i] = math.exp(log_a_fit[j])
    A = traj.frame @ np.diag(a_diag) @ traj.frame.T
    logger.debug(f"asymptotic fit: C**={cstarstar:.6g}, decay exponent {exponent:.3g}")
    return AsymptoticFit(0.5 * (A + A.T), cstarstar, per_channel, float(np.max(rel)), exponent, channels)


def ansatz_lambdas(taus: Sequence[float], log_a: Sequence[float], cstarstar: float) -> FloatArray:
    """Spectral values 1/(log aᵢ + √2τ + C**log(−τ)) of the asymptotic ansatz."""
    t = np.asarray(taus, dtype=float)[:, None]
    return 1.0 / (np.asarray(log_a, dtype=float)[None, :] + SQRT2 * t + cstarstar * np.log(-t))


def compare_to_pde(
    records: Sequence[Any], system: BarUSystem, start: Optional[float] = None
) -> Dict[str, Any]:
    """Match Ū to the tracked U₀ at the last record and fit the backward decay of ‖U₀ − Ū‖.

    The difference is fitted as (τ̃ − τ + 10)^(−p) over records with τ >= start.

    Args:
        records (Sequence[Any]): track records (anything with `tau` and `Uplus`)
        system (BarUSystem): ODE constants
        start (Optional[float], optional): earliest record time used. Defaults to the first record.

    Returns:
        Dict[str, Any]: match time, sample times, differences and the exponent p
    """
    used = [r for r in records if start is None or r.tau >= start]
    if len(used) < 3:
        raise FitError("need at least three records to compare")
    c_mats = [LeadingModes.from_mode_vector(r.Uplus).c for r in used]
    taus = np.array([r.tau for r in used])
    frame, eigs = spectral_reduce(c_mats[-1])
    # the matrix ODE lives on non-positive definite matrices
    match = frame @ np.diag(np.minimum(eigs, 0.0)) @ frame.T
    traj = integrate_barU(match, (float(taus[-1]), float(taus[0])), system)
    diffs = np.array([np.linalg.norm(c - traj.matrix(float(t))) for c, t in zip(c_mats, taus)])
    x = taus[-1] - taus[:-1] + 10.0
    try:
        exponent = decay_exponent(x, diffs[:-1])
    except FitError:
        exponent = math.nan
    logger.info(f"U0 vs Ubar: decay exponent {exponent:.3g} over {len(used)} records")
    return {
        "match_tau": float(taus[-1]),
        "taus": taus.tolist(),
        "differences": diffs.tolist(),
        "exponent": exponent,
    }


def write_q_report(
    q: QInvariant, path: PathLike, fit: Optional[AsymptoticFit] = None, residuals: Optional[Dict[str, float]] = None
):
    """Write {k, c, Cstar, Q, tau_U, A, Cstarstar, residuals} as JSON."""
    document = q.to_dict()
    document["A"] = None if fit is None else fit.A.tolist()
    document["Cstarstar"] = None if fit is None else fit.Cstarstar
    document["residuals"] = dict(residuals or {})
    if fit is not None:
        document["residuals"]["fit"] = fit.residual
        document["residuals"]["decay_exponent"] = fit.decay_exponent
    return write_json(path, document)
