"""Localized mode projections, radius policies, ODI residuals and dominance phases."""

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import map_coordinates
from tqdm.auto import tqdm

from mcf_modes.hermite.basis import Dimensions, mode_matrix, modes_above
from mcf_modes.hermite.modes import ModeVector, apply_l
from mcf_modes.hermite.quadrature import QuadratureRule, project
from mcf_modes.pde.cutoff import cutoff
from mcf_modes.pde.grid import RadialGraphState, grid_points, trapezoid_weights
from mcf_modes.pde.solver import Trajectory
from mcf_modes.taylor import LeadingModes, q_field
from mcf_modes.types import FloatArray, PathLike
from mcf_modes.utils import ModeLabError, read_csv, write_csv

logger = logging.getLogger(__name__)

POLICIES = ("fixed", "ancient", "quadratic")
PROJECTIONS = ("grid", "nodes")
PHASES = ("quadratic", "linear", "constant")
TRACK_COLUMNS = [
    "tau",
    "R",
    "Upp_norm",
    "U0_min",
    "U0_max",
    "U12_norm",
    "U1_norm",
    "Uminus",
    "residual_plus",
    "phase",
]


class TrackerError(ModeLabError):
    """exceptions thrown by the mode tracker."""

    pass


@dataclass(frozen=True)
class TrackerConfig:
    """Parameters of the localized projections and the phase classifier.

    Args:
        lam (float): spectral threshold, a negative half-integer
        J (int): Taylor order of the projected nonlinearity
        m (int): derivative order for reporting
        eta (float): smallness threshold in (0, 1/10]
        eps (float): radius slack in (0, 1)
        Rstar (float): minimum cutoff radius
        c0 (float): dominance ratio
        xi (float): relative tolerance of the rate laws
        radius_policy (str): "fixed", "ancient" or "quadratic"
        R_fixed (float): radius of the fixed policy
        tdtau (Optional[float]): end time τ̃ of the quadratic policy, defaults to the last tracked time
        projection (str): "grid" (trapezoid on the solver grid) or "nodes" (interpolation to Gauss nodes)
        transient (float): initial time span ignored by the rate checks
    """

    lam: float = -1.5
    J: int = 3
    m: int = 4
    eta: float = 0.1
    eps: float = 0.5
    Rstar: float = 3.0
    c0: float = 0.1
    xi: float = 0.2
    radius_policy: str = "fixed"
    R_fixed: float = 8.0
    tdtau: Optional[float] = None
    projection: str = "grid"
    transient: float = 0.0

    def __post_init__(self) -> None:
        """Validate."""
        if not (self.lam < 0 and float(2 * self.lam).is_integer()):
            raise ValueError(f"lam must be a negative half-integer, got {self.lam}")
        if self.J < 1 or self.m < 4:
            raise ValueError("J must be >= 1 and m >= 4")
        if not 0 < self.eta <= 0.1:
            raise ValueError(f"eta must lie in (0, 1/10], got {self.eta}")
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if self.Rstar < 1 or self.c0 <= 0 or self.xi <= 0 or self.transient < 0:
            raise ValueError("Rstar must be >= 1 and c0, xi positive")
        if self.radius_policy not in POLICIES:
            raise ValueError(f"radius_policy must be one of {POLICIES}")
        if self.projection not in PROJECTIONS:
            raise ValueError(f"projection must be one of {PROJECTIONS}")

    @property
    def plus_cap(self) -> int:
        """Highest degree with L-eigenvalue above lam."""
        return int(round(2.0 * (1.0 - self.lam))) - 1

    @property
    def taylor_order(self) -> int:
        """Taylor order actually assembled (J truncated at 3)."""
        return min(self.J, 3)

    def floor(self, R: float) -> float:
        """Exponential floor η·e^(−((1−ε)R)²/8) of 𝒰⁻."""
        return self.eta * math.exp(-(((1.0 - self.eps) * R) ** 2) / 8.0)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TrackerConfig":
        """Build from a mapping; unknown keys raise KeyError naming the field."""
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise KeyError(key)
        return cls(**dict(data))

    def to_dict(self) -> Dict[str, Any]:
        """Serialize."""
        return asdict(self)


@dataclass(frozen=True, eq=False)
class TrackRecord:
    """Diagnostics of one tracked time."""

    tau: float
    R: float
    clamped: bool
    Uplus: ModeVector = field(repr=False)
    Upp_norm: float
    Uminus: float
    U0_min: float
    U0_max: float
    U0_norm: float
    U12_norm: float
    U1_norm: float
    residual_plus: float = math.nan
    phase: str = "none"

    def row(self) -> List[Any]:
        """CSV row in `TRACK_COLUMNS` order."""
        return [
            self.tau,
            self.R,
            self.Upp_norm,
            self.U0_min,
            self.U0_max,
            self.U12_norm,
            self.U1_norm,
            self.Uminus,
            self.residual_plus,
            self.phase,
        ]


@lru_cache(maxsize=8)
def _grid_basis(k: int, h: float, R_dom: float, cap: int, lam: float) -> Tuple[FloatArray, FloatArray]:
    modes = modes_above(k, lam, cap)
    points = grid_points(h, R_dom, k).reshape(-1, k)
    weights = trapezoid_weights(h, R_dom, k).reshape(-1)
    basis = mode_matrix(modes, points) * weights
    weights.setflags(write=False)
    basis.setflags(write=False)
    return basis, weights


def _check_radius(state: RadialGraphState, R: float) -> None:
    if not 1.0 <= R <= state.R_dom:
        raise TrackerError(f"cutoff radius {R} outside [1, R_dom={state.R_dom}]")


def _nodes_field(state: RadialGraphState, R: float, rule: QuadratureRule) -> FloatArray:
    coords = (rule.nodes + state.R_dom) / state.h
    inside = np.all((coords >= 0) & (coords <= state.values.shape[0] - 1), axis=-1)
    values = np.zeros(len(rule))
    values[inside] = map_coordinates(
        state.values, coords[inside].T, order=3, mode="nearest"
    )
    return values * cutoff(rule.nodes, R)


def _localized(
    state: RadialGraphState, R: float, config: TrackerConfig
) -> Tuple[ModeVector, float]:
    """U⁺ and ‖uω_R‖² under the configured quadrature."""
    _check_radius(state, R)
    k, cap = state.k, config.plus_cap
    if config.projection == "grid":
        basis, weights = _grid_basis(k, state.h, state.R_dom, cap, config.lam)
        f = (state.values * cutoff(state.points, R)).reshape(-1)
        coeffs = basis @ f
        total = float(np.dot(weights, f * f))
        return ModeVector.from_arrays(modes_above(k, config.lam, cap), coeffs, k, cap), total
    rule = QuadratureRule.gauss(k)
    f = _nodes_field(state, R, rule)
    plus = project(f, cap, rule).above(config.lam)
    return plus, float(np.dot(rule.weights, f * f))


def u_plus(state: RadialGraphState, R: float, config: TrackerConfig) -> ModeVector:
    """Projection of uω_R onto the modes with L-eigenvalue > λ.

    Args:
        state (RadialGraphState): graph state
        R (float): cutoff radius
        config (TrackerConfig): tracker settings

    Returns:
        ModeVector: U⁺

    Raises:
        TrackerError: R exceeds the grid
    """
    return _localized(state, R, config)[0]


def u_minus(state: RadialGraphState, R: float, config: TrackerConfig) -> float:
    """Below-threshold norm √max(‖uω_R‖² − ‖U⁺‖², 0) plus the exponential floor.

    Raises:
        TrackerError: R exceeds the grid
    """
    plus, total = _localized(state, R, config)
    return math.sqrt(max(total - plus.norm() ** 2, 0.0)) + config.floor(R)


def radius_ancient(Upp_norm: float, J: int) -> float:
    """Radius with e^(−R²) = ‖U⁺⁺‖^J, infinite for ‖U⁺⁺‖ = 0.

    Raises:
        ValueError: ‖U⁺⁺‖ outside [0, 1)
    """
    if not 0.0 <= Upp_norm < 1.0:
        raise ValueError(f"Upp_norm must lie in [0, 1), got {Upp_norm}")
    if Upp_norm == 0.0:
        return math.inf
    return math.sqrt(J * math.log(1.0 / Upp_norm))


def radius_quadratic(tau: float, tdtau: float, J: int) -> float:
    """Radius J√(log(τ̃ − τ + 10)) of the quadratic-dominant regime."""
    if tau > tdtau:
        raise ValueError(f"tau={tau} is after tdtau={tdtau}")
    return J * math.sqrt(math.log(tdtau - tau + 10.0))


def choose_radius(
    state: RadialGraphState, config: TrackerConfig, tdtau: Optional[float] = None
) -> Tuple[float, bool]:
    """Cutoff radius from the configured policy, clamped to [Rstar, R_dom − 1].

    Returns:
        Tuple[float, bool]: radius and whether clamping changed it
    """
    r_max = state.R_dom - 1.0
    if r_max < config.Rstar:
        raise TrackerError(f"R_dom - 1 = {r_max} is below Rstar = {config.Rstar}")
    if config.radius_policy == "fixed":
        raw = config.R_fixed
    elif config.radius_policy == "ancient":
        upp = u_plus(state, r_max, config).restrict(max_degree=2).norm()
        raw = radius_ancient(upp, config.J) if upp < 1.0 else config.Rstar
    else:
        end = tdtau if tdtau is not None else config.tdtau
        if end is None:
            raise TrackerError("quadratic radius policy needs tdtau")
        raw = radius_quadratic(state.tau, end, config.J)
    R = min(max(raw, config.Rstar), r_max)
    return R, R != raw


def measure(
    state: RadialGraphState, config: TrackerConfig, tdtau: Optional[float] = None
) -> TrackRecord:
    """Track one state (residual and phase are filled in by `track`)."""
    R, clamped = choose_radius(state, config, tdtau)
    plus, total = _localized(state, R, config)
    leading = LeadingModes.from_mode_vector(plus)
    eigs = np.linalg.eigvalsh(leading.c)
    return TrackRecord(
        tau=state.tau,
        R=R,
        clamped=clamped,
        Uplus=plus,
        Upp_norm=plus.restrict(max_degree=2).norm(),
        Uminus=math.sqrt(max(total - plus.norm() ** 2, 0.0)) + config.floor(R),
        U0_min=float(eigs[0]),
        U0_max=float(eigs[-1]),
        U0_norm=plus.of_degree(2).norm(),
        U12_norm=plus.of_degree(1).norm(),
        U1_norm=plus.of_degree(0).norm(),
    )


def phase_of(record: TrackRecord, c0: float) -> str:
    """Dominance test of one record: quadratic, linear, constant, ambiguous or none."""
    u0, u12, u1 = record.U0_norm, record.U12_norm, record.U1_norm
    if u0 == 0.0 and u12 == 0.0 and u1 == 0.0:
        return "none"
    if u12 <= c0 * u0 and u1 <= c0 * u0:
        return "quadratic"
    if c0 * u0 <= u12 and u1 <= u12:
        return "linear"
    if c0 * u0 <= u1 and u12 <= u1:
        return "constant"
    return "ambiguous"


def _time_derivative(
    before: ModeVector, after: ModeVector, tau_before: float, tau_after: float
) -> ModeVector:
    return (after - before) * (1.0 / (tau_after - tau_before))


def residual_plus(
    records: Sequence[TrackRecord], config: TrackerConfig, dims: Dimensions
) -> float:
    """‖∂_τU⁺ − LU⁺ − P_(>λ)Q_J(U⁺)‖ at the middle of three consecutive records.

    The time derivative is a central difference; Q_J is assembled through order
    min(J, 3).

    Args:
        records (Sequence[TrackRecord]): three consecutive records
        config (TrackerConfig): tracker settings
        dims (Dimensions): dimensions

    Returns:
        float: residual norm

    Raises:
        TrackerError: fewer than three records
    """
    if len(records) != 3:
        raise TrackerError(f"residual_plus needs three consecutive records, got {len(records)}")
    before, mid, after = records
    u = mid.Uplus
    if u.max_abs() == 0.0 and before.Uplus.max_abs() == 0.0 and after.Uplus.max_abs() == 0.0:
        return 0.0
    dudt = _time_derivative(before.Uplus, after.Uplus, before.tau, after.tau)
    rule = QuadratureRule.gauss(dims.k)
    nonlinear = project(q_field(u, config.taylor_order, dims), config.plus_cap, rule).above(
        config.lam
    )
    return (dudt - apply_l(u) - nonlinear).norm()


def track(
    trajectory: Trajectory,
    config: TrackerConfig,
    quiet: bool = True,
) -> List[TrackRecord]:
    """Fold a trajectory into track records with residuals and phases.

    The first and last records have no central difference and keep a NaN residual.

    Args:
        trajectory (Trajectory): simulated states
        config (TrackerConfig): tracker settings
        quiet (bool, optional): disable progress bar. Defaults to True.

    Returns:
        List[TrackRecord]: one record per snapshot
    """
    if not len(trajectory):
        return []
    if config.J > 3:
        logger.warning(f"Taylor order J={config.J} is truncated at 3 in the residual")
    dims = trajectory[0].dims
    tdtau = config.tdtau if config.tdtau is not None else float(trajectory[-1].tau)
    raw = [
        measure(state, config, tdtau)
        for state in tqdm(trajectory.states, desc="tracking modes", disable=quiet)
    ]
    records = []
    for i, record in enumerate(raw):
        res = (
            residual_plus(raw[i - 1 : i + 2], config, dims)
            if 0 < i < len(raw) - 1
            else math.nan
        )
        records.append(replace(record, residual_plus=res, phase=phase_of(record, config.c0)))
    logger.info(f"tracked {len(records)} records, R in [{min(r.R for r in records)}, {max(r.R for r in records)}]")
    return records


def leading_modes(record: TrackRecord) -> LeadingModes:
    """(a, b, c) view of the tracked U⁺."""
    return LeadingModes.from_mode_vector(record.Uplus)


def fit_growth_rate(taus: Sequence[float], norms: Sequence[float]) -> float:
    """Least-squares slope of log(norm) against τ."""
    t = np.asarray(taus, dtype=float)
    y = np.asarray(norms, dtype=float)
    keep = y > 0
    if keep.sum() < 2:
        raise TrackerError("need at least two positive samples to fit a growth rate")
    slope, _ = np.polyfit(t[keep], np.log(y[keep]), 1)
    return float(slope)


def _central_derivative(taus: FloatArray, values: FloatArray) -> FloatArray:
    return np.gradient(values, taus, axis=0)


@dataclass
class PhaseReport:
    """Dominance phases of a track.

    `tau0`, `tau_half` and `tau1` are the ends of the U₀,max-dominant part, of
    the quadratic phase and of the linear phase; fractions are shares of samples
    satisfying the respective rate law (None when the phase is absent).
    """

    segments: List[Tuple[str, float, float]] = field(default_factory=list)
    ambiguous: List[Tuple[float, float]] = field(default_factory=list)
    tau0: Optional[float] = None
    tau_half: Optional[float] = None
    tau1: Optional[float] = None
    sqrt2_fraction_min: Optional[float] = None
    sqrt2_fraction_max: Optional[float] = None
    linear_rate_fraction: Optional[float] = None
    constant_rate_fraction: Optional[float] = None
    ordered: bool = True

    @property
    def phases(self) -> List[str]:
        """Phase labels in time order."""
        return [s[0] for s in self.segments]

    @property
    def dominant(self) -> str:
        """Phase covering the longest time, or "none"."""
        if not self.segments:
            return "none"
        return max(self.segments, key=lambda s: s[2] - s[1])[0]

    def to_dict(self) -> Dict[str, Any]:
        """Serialize."""
        out = asdict(self)
        out["phases"] = self.phases
        out["dominant"] = self.dominant
        return out


def _segments(taus: FloatArray, labels: Sequence[str]) -> List[Tuple[str, float, float]]:
    out: List[Tuple[str, float, float]] = []
    for tau, label in zip(taus, labels):
        if out and out[-1][0] == label:
            out[-1] = (label, out[-1][1], float(tau))
        else:
            out.append((label, float(tau), float(tau)))
    return out


def _law_fraction(mask: FloatArray, deviation: FloatArray, scale: FloatArray, xi: float) -> Optional[float]:
    if not np.any(mask):
        return None
    ok = np.abs(deviation[mask]) <= xi * scale[mask]
    return float(np.mean(ok))


def classify_phases(
    records: Sequence[TrackRecord], c0: float = 0.1, xi: float = 0.2, transient: float = 0.0
) -> PhaseReport:
    """Partition a track into quadratic, linear and constant phases.

    Within the quadratic phase the √2-law |∂λ + √2λ²| <= ξλ² is checked for
    U₀,min where it dominates and for U₀,max where it dominates; the linear and
    constant phases are checked against the rates ½ and 1.

    Args:
        records (Sequence[TrackRecord]): track in time order
        c0 (float, optional): dominance ratio. Defaults to 0.1.
        xi (float, optional): relative tolerance. Defaults to 0.2.
        transient (float, optional): time span after the first record excluded from the rate laws. Defaults to 0.0.

    Returns:
        PhaseReport: segments, boundaries and rate-law fractions
    """
    report = PhaseReport()
    if not records:
        return report
    taus = np.array([r.tau for r in records])
    labels = [phase_of(r, c0) for r in records]
    report.segments = [s for s in _segments(taus, labels) if s[0] in PHASES]
    report.ambiguous = [(s[1], s[2]) for s in _segments(taus, labels) if s[0] == "ambiguous"]
    if report.ambiguous:
        logger.warning(f"{len(report.ambiguous)} ambiguous dominance intervals")
    ranks = [PHASES.index(p) for p in report.phases]
    report.ordered = all(a < b for a, b in zip(ranks, ranks[1:]))

    phase = np.array(labels)
    settled = taus >= taus[0] + transient
    if len(records) >= 3:
        lam_min = np.array([r.U0_min for r in records])
        lam_max = np.array([r.U0_max for r in records])
        quad = (phase == "quadratic") & settled
        min_dom = quad & (lam_min <= -np.abs(lam_max))
        max_dom = quad & (np.abs(lam_min) <= lam_max)
        report.sqrt2_fraction_min = _law_fraction(
            min_dom, _central_derivative(taus, lam_min) + math.sqrt(2.0) * lam_min**2, lam_min**2, xi
        )
        report.sqrt2_fraction_max = _law_fraction(
            max_dom, _central_derivative(taus, lam_max) + math.sqrt(2.0) * lam_max**2, lam_max**2, xi
        )
        b = np.array([leading_modes(r).b for r in records])
        a = np.array([leading_modes(r).a for r in records])
        db = _central_derivative(taus, b)
        da = _central_derivative(taus, a)
        report.linear_rate_fraction = _law_fraction(
            (phase == "linear") & settled,
            np.linalg.norm(db - 0.5 * b, axis=1),
            np.linalg.norm(b, axis=1),
            xi,
        )
        report.constant_rate_fraction = _law_fraction(
            (phase == "constant") & settled, da - a, np.abs(a), xi
        )

    quad_segments = [s for s in report.segments if s[0] == "quadratic"]
    if quad_segments:
        start, end = quad_segments[0][1], quad_segments[0][2]
        in_quad = (taus >= start) & (taus <= end)
        max_dominant = in_quad & np.array([abs(r.U0_min) <= r.U0_max for r in records])
        report.tau0 = float(taus[max_dominant][-1]) if np.any(max_dominant) else start
        report.tau_half = end
    lin_segments = [s for s in report.segments if s[0] == "linear"]
    if lin_segments:
        report.tau1 = lin_segments[0][2]
    return report


def fit_residual_constant(
    records: Sequence[TrackRecord], J: int, quantile: float = 1.0
) -> float:
    """Smallest C with residual_plus <= C(‖U⁺⁺‖^(J+1) + 𝒰⁻) on the given quantile of records.

    Raises:
        TrackerError: no record carries a residual
    """
    ratios = [
        r.residual_plus / (r.Upp_norm ** (J + 1) + r.Uminus)
        for r in records
        if math.isfinite(r.residual_plus)
    ]
    if not ratios:
        raise TrackerError("no residuals to fit")
    return float(np.quantile(ratios, quantile))


def write_track_csv(records: Sequence[TrackRecord], path: PathLike) -> Path:
    """Write records with `TRACK_COLUMNS`."""
    return write_csv(path, TRACK_COLUMNS, (r.row() for r in records))


def read_track_csv(path: PathLike) -> List[Dict[str, Any]]:
    """Read a track CSV; numeric columns are converted to float."""
    rows = []
    for row in read_csv(path):
        rows.append({k: (v if k == "phase" else float(v)) for k, v in row.items()})
    return rows

