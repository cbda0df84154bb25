"""Verification suites: closed forms against quadrature oracles, ODE laws and PDE runs."""

import logging
import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from mcf_modes.constants import (
    constants_path,
    derive_constants,
    q3_v0_project,
    verify_constants_file,
    write_constants_file,
)
from mcf_modes.hermite.basis import CLOSED_FORMS, Dimensions, hermite_table, unit_index
from mcf_modes.hermite.modes import ModeVector
from mcf_modes.hermite.quadrature import QuadratureRule, expand_product, gram_matrix, inner, project
from mcf_modes.linear_mode import (
    LinearAsymptotics,
    ansatz_trajectory,
    bowl_constant,
    bowl_fixed_point,
    extract_asymptotics,
    transform_asymptotics,
)
from mcf_modes.odi import (
    TrackerConfig,
    classify_phases,
    fit_growth_rate,
    fit_residual_constant,
    phase_of,
    track,
    u_plus,
)
from mcf_modes.pde import SolverConfig, seed_state, simulate
from mcf_modes.pde.checks import fixed_point_drift, reflection_defect, spatial_order
from mcf_modes.pde.solver import nonlinear_term
from mcf_modes.quadratic_mode import (
    MIN_DECAY_EXPONENT,
    BarUSystem,
    ancient_seed,
    compare_to_pde,
    embed,
    fit_asymptotics,
    integrate_barU,
    integrate_matrix,
    predicted_cstarstar,
    q_invariant,
    q_inverse,
)
from mcf_modes.scenario import versions
from mcf_modes.taylor import SQRT2, LeadingModes, correction_map, q2_field, q2_leading
from mcf_modes.types import FloatArray, PathLike
from mcf_modes.utils import ModeLabError, checksum_file, write_csv, write_json

logger = logging.getLogger(__name__)

CHECK_COLUMNS = ["suite", "check", "value", "threshold", "relation", "passed"]

PDE_DIMS = Dimensions(2, 1)
PDE_SOLVER = SolverConfig(h=0.05, dt=0.01, R_dom=12.0)
PDE_TRACKER = TrackerConfig(R_fixed=8.0, transient=5.0)
PDE_SPAN = (0.0, 40.0)
SEED_CUTOFF = 8.0
QUADRATIC_AMPLITUDE = -0.002
SHOOTING_HORIZONS = (10.0, 20.0, 30.0)
RATE_AMPLITUDE = 0.01
RESIDUAL_SPAN = (0.0, 10.0)


@dataclass(frozen=True)
class Check:
    """One verified quantity."""

    suite: str
    name: str
    value: float
    threshold: float
    relation: str

    @property
    def passed(self) -> bool:
        """Whether the value satisfies the relation."""
        if not math.isfinite(self.value):
            return False
        if self.relation == "<=":
            return self.value <= self.threshold
        return self.value >= self.threshold

    def row(self) -> List[Any]:
        """CSV row in `CHECK_COLUMNS` order."""
        return [self.suite, self.name, float(self.value), float(self.threshold), self.relation, self.passed]


def at_most(suite: str, name: str, value: float, threshold: float) -> Check:
    """Check value <= threshold."""
    return Check(suite, name, float(value), threshold, "<=")


def at_least(suite: str, name: str, value: float, threshold: float) -> Check:
    """Check value >= threshold."""
    return Check(suite, name, float(value), threshold, ">=")


@dataclass
class VerifyContext:
    """Settings shared by the suites."""

    rng_seed: int = 0
    out_dir: Optional[Path] = None
    quiet: bool = True

    def rng(self, offset: int = 0) -> np.random.Generator:
        """Fresh generator, reproducible per suite."""
        return np.random.default_rng(self.rng_seed + offset)


@dataclass
class VerifySummary:
    """Checks of one `verify` call."""

    suites: List[str]
    checks: List[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """All checks passed."""
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[Check]:
        """Failed checks."""
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> Dict[str, Any]:
        """Serialize."""
        return {
            "suites": self.suites,
            "passed": self.passed,
            "n_checks": len(self.checks),
            "failures": [f"{c.suite}.{c.name}" for c in self.failures],
        }

    def write(self, out_dir: PathLike) -> List[Path]:
        """Write `checks.csv`, `verify.json` and `manifest.json` into `out_dir`."""
        out = Path(out_dir)
        files = [
            write_csv(out / "checks.csv", CHECK_COLUMNS, (c.row() for c in self.checks)),
            write_json(out / "verify.json", self.to_dict()),
        ]
        manifest: Dict[str, Any] = {
            "suites": self.suites,
            "versions": versions(),
            "files": {p.name: checksum_file(p) for p in files},
        }
        constants = out / "constants.json"
        if constants.exists():
            manifest["constants_checksum"] = checksum_file(constants)
        files.append(write_json(out / "manifest.json", manifest))
        return files


def _hermite(ctx: VerifyContext) -> List[Check]:
    checks = []
    for k in (1, 2, 3):
        gram = gram_matrix(k, 8)
        checks.append(at_most("hermite", f"gram_k{k}", np.max(np.abs(gram - np.eye(gram.shape[0]))), 1e-10))

    x = np.linspace(-6.0, 6.0, 61)
    table = hermite_table(4, x)
    worst = max(np.max(np.abs(table[d] - form(x))) for d, form in CLOSED_FORMS.items())
    checks.append(at_most("hermite", "recurrence_closed_forms", worst, 1e-10))

    # (c·p1)² against the per-pair identities p1_i p1_j = p11_ij, p1_i² = √2 p2_ii + 1
    k = 2
    c = ctx.rng(0).uniform(-1.0, 1.0, k)
    u = ModeVector(k, {unit_index(k, i): float(c[i]) for i in range(k)})
    got = expand_product(u, u)
    expected = ModeVector.zeros(k, got.cap)
    for i in range(k):
        for j in range(k):
            if i == j:
                pair = ModeVector(k, {unit_index(k, i, i): SQRT2, unit_index(k): 1.0}, got.cap)
            else:
                pair = ModeVector(k, {unit_index(k, i, j): 1.0}, got.cap)
            expected = expected + float(c[i] * c[j]) * pair
    checks.append(at_most("hermite", "p1_product_identity", (got - expected).max_abs(), 1e-12))

    p2 = ModeVector.basis(unit_index(1, 0, 0))
    triple = inner(lambda x: p2(x) ** 2, p2, QuadratureRule.gauss(1))
    checks.append(at_most("hermite", "triple_p2", abs(triple - 2.0 * SQRT2), 1e-8))
    return checks


def _random_leading(rng: np.random.Generator, k: int, scale: float = 0.3) -> LeadingModes:
    c = rng.uniform(-scale, scale, (k, k))
    return LeadingModes(rng.uniform(-scale, scale), rng.uniform(-scale, scale, k), 0.5 * (c + c.T))


def _taylor(ctx: VerifyContext) -> List[Check]:
    rng = ctx.rng(1)
    worst = 0.0
    for trial in range(100):
        k = 1 + trial % 3
        u = _random_leading(rng, k)
        closed = q2_leading(u)
        oracle = LeadingModes.from_mode_vector(project(q2_field(u.to_mode_vector()), 2, k=k))
        worst = max(worst, (closed - oracle).max_abs() / max(closed.max_abs(), 1e-300))
    checks = [at_most("taylor", "q2_closed_form", worst, 1e-8)]

    odd = 0.0
    for k in (1, 2, 3):
        d = rng.uniform(-0.3, 0.3, k)
        u = ModeVector(k, {unit_index(k, i, i): d[i] for i in range(k)})
        projected = project(q2_field(u), 4, k=k)
        odd = max(odd, projected.of_degree(1).max_abs(), projected.of_degree(3).max_abs())
    checks.append(at_most("taylor", "q2_diag_odd_modes", odd, 1e-10))
    return checks


def _full_neutral(eps: float, dims: Dimensions, rule: QuadratureRule) -> float:
    u = ModeVector.basis(unit_index(1, 0, 0)) * eps

    def full(x: FloatArray) -> FloatArray:
        return nonlinear_term(u(x), u.gradient(x), u.hessian(x), dims)

    return project(full, 2, rule)[unit_index(1, 0, 0)]


def _constants(ctx: VerifyContext) -> List[Check]:
    dims = Dimensions(2, 1)
    checks = []
    base, refined = derive_constants(dims, 20), derive_constants(dims, 24)
    for name in ("C1", "C2", "Cstar"):
        checks.append(
            at_most("constants", f"{name}_order_stability", abs(getattr(base, name) - getattr(refined, name)), 1e-6)
        )

    rule = QuadratureRule.gauss(1, 40)
    amplitudes = (0.02, 0.01, 0.005)
    errors = [abs(q3_v0_project(0.0, [eps], constants=base)[0] - _full_neutral(eps, dims, rule)) for eps in amplitudes]
    slopes = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
    checks.append(at_least("constants", "q3_richardson_slope", min(slopes), 3.8))

    with tempfile.TemporaryDirectory() as tmp:
        path = constants_path(ctx.out_dir or tmp)
        if not path.exists():
            write_constants_file(path, quiet=ctx.quiet)
        problems = verify_constants_file(path)
        for problem in problems:
            logger.error(f"constants file: {problem}")
        checks.append(at_most("constants", "stored_file_mismatches", len(problems), 0))
    return checks


def _matrix_ode(ctx: VerifyContext) -> List[Check]:
    system = BarUSystem.for_dims(Dimensions(2, 1))
    tau0 = -1e6
    traj = integrate_barU(ancient_seed([True], tau0), (tau0, -1e2), system)
    far = traj.taus <= -1e3
    leading = np.max(np.abs(traj.taus[far] * traj.lambdas[far, 0] - 1.0 / SQRT2))
    checks = [at_most("matrix-ode", "ancient_leading_term", leading, 0.05)]

    finals = [
        integrate_barU([[-0.2]], (0.0, -5.0), system, method="rk4", dt=dt).at(-5.0)[0]
        for dt in (0.5, 0.25, 0.125)
    ]
    order = math.log2(abs(finals[0] - finals[1]) / abs(finals[1] - finals[2]))
    checks.append(at_least("matrix-ode", "rk4_step_halving_order", order, 3.8))

    system2 = BarUSystem.for_dims(Dimensions(3, 2))
    g = ctx.rng(2).normal(size=(2, 2))
    u0 = -0.3 * (g @ g.T) / np.linalg.norm(g @ g.T)
    spectral = integrate_barU(u0, (0.0, -5.0), system2)
    full = integrate_matrix(u0, (0.0, -5.0), system2).y[:, -1].reshape(2, 2)
    end = spectral.matrix(-5.0)
    checks.append(at_most("matrix-ode", "spectral_vs_full", np.max(np.abs(end - full)), 1e-8))
    checks.append(at_most("matrix-ode", "frame_commutes", np.max(np.abs(end @ u0 - u0 @ end)), 1e-10))
    checks.append(at_most("matrix-ode", "sign_preserved", float(np.max(spectral.lambdas)), 0.0))

    lam = traj.lambdas[:, 0]
    small = np.abs(lam) <= system.c
    rate = np.array([-system.eig_rhs(0.0, np.array([v]))[0] / v**2 for v in lam[small]])
    checks.append(at_most("matrix-ode", "inverse_rate_deviation", np.max(np.abs(rate - SQRT2)), 0.2))

    fit = fit_asymptotics(traj, min_exponent=None)
    checks.append(at_least("matrix-ode", "fit_decay_exponent", fit.decay_exponent, MIN_DECAY_EXPONENT))
    predicted = predicted_cstarstar(1, system.cstar)
    checks.append(at_most("matrix-ode", "cstarstar_rank_one", abs(fit.Cstarstar / predicted - 1.0), 0.01))

    fit2 = fit_asymptotics(q_inverse(np.diag([0.5, 0.05]), system2).extend(-1e6), min_exponent=None)
    checks.append(at_least("matrix-ode", "fit_decay_exponent_rank_two", fit2.decay_exponent, MIN_DECAY_EXPONENT))
    checks.append(at_most("matrix-ode", "cstarstar_channel_spread", fit2.channel_spread, 0.05))
    predicted2 = predicted_cstarstar(2, system2.cstar)
    checks.append(at_most("matrix-ode", "cstarstar_rank_two", abs(fit2.Cstarstar / predicted2 - 1.0), 0.02))
    return checks


def _random_psd(rng: np.random.Generator, k: int) -> FloatArray:
    g = rng.normal(size=(k, k))
    m = g @ g.T
    return rng.uniform(0.05, 1.0) * m / np.linalg.norm(m)


def _relative(a: FloatArray, b: FloatArray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def _q_invariant(ctx: VerifyContext) -> List[Check]:
    rng = ctx.rng(3)
    systems = {k: BarUSystem.for_dims(Dimensions(k + 1, k)) for k in (1, 2)}
    worst = 0.0
    for trial in range(50):
        k = 1 + trial % 2
        qp = _random_psd(rng, k)
        worst = max(worst, _relative(q_invariant(q_inverse(qp, systems[k])).Q, qp))
    checks = [at_most("q-invariant", "round_trip", worst, 1e-4)]

    system = systems[2]
    qp = _random_psd(rng, 2)
    u0 = -0.9 * system.c * qp / np.linalg.eigvalsh(qp)[-1]
    base = q_invariant(integrate_barU(u0, (0.0, 1.0), system)).Q
    shift = 0.0
    for lam in (0.5, 2.0, 10.0):
        t0 = -2.0 * math.log(lam)
        moved = q_invariant(integrate_barU(u0, (t0, t0 + 1.0), system)).Q
        shift = max(shift, _relative(moved, lam * base))
    checks.append(at_most("q-invariant", "time_shift_homogeneity", shift, 1e-6))

    s, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    conj = q_invariant(integrate_barU(s.T @ u0 @ s, (0.0, 1.0), system)).Q
    checks.append(at_most("q-invariant", "orthogonal_equivariance", _relative(conj, s.T @ base @ s), 1e-8))

    traj = q_inverse(np.diag([0.5, 0.0]), system)
    q = q_invariant(traj).Q
    entries = [traj.matrix(float(t))[1] for t in traj.taus] + [q[1]]
    structural = float(np.max(np.abs(entries)))
    checks.append(at_most("q-invariant", "nullspace_structural_zero", structural, 0.0))

    one = q_inverse([[0.3]], systems[1])
    embedded = q_invariant(embed(one, 2)).Q
    checks.append(at_most("q-invariant", "embedding_commutes", np.max(np.abs(embedded - embed(q_invariant(one).Q, 2))), 1e-12))
    return checks


def _linear(ctx: VerifyContext) -> List[Check]:
    taus = np.linspace(-30.0, -10.0, 201)
    worst = 0.0
    for a_bar, b_bar in ((0.3, [0.2, 0.0]), (-0.1, [0.0, 0.0])):
        truth = LinearAsymptotics(a_bar, b_bar)
        fitted = extract_asymptotics(ansatz_trajectory(truth, taus))
        worst = max(worst, abs(fitted.a_bar - a_bar), float(np.max(np.abs(fitted.b_bar - truth.b_bar))))
    checks = [at_most("linear", "manufactured_round_trip", worst, 1e-3)]

    rng = ctx.rng(4)
    algebra = 0.0
    for _ in range(20):
        asym = LinearAsymptotics(rng.uniform(-1, 1), rng.uniform(-1, 1, 2))
        a1, a2 = rng.uniform(0.2, 5.0, 2)
        p1, p2 = rng.uniform(-1, 1, (2, 2))
        t1, t2 = rng.uniform(-1, 1, 2)
        composed = transform_asymptotics(transform_asymptotics(asym, a1), a2)
        direct = transform_asymptotics(asym, a1 * a2)
        shifted = transform_asymptotics(transform_asymptotics(asym, 1.0, p1, t1), 1.0, p2, t2)
        joint = transform_asymptotics(asym, 1.0, p1 + p2, t1 + t2)
        back = transform_asymptotics(transform_asymptotics(asym, a1), 1.0 / a1)
        algebra = max(
            algebra,
            abs(composed.a_bar - direct.a_bar),
            abs(shifted.a_bar - joint.a_bar),
            abs(back.a_bar - asym.a_bar),
            float(np.max(np.abs(back.b_bar - asym.b_bar))),
        )
    checks.append(at_most("linear", "transformation_algebra", algebra, 1e-10))

    bowl = all(bowl_fixed_point(bowl_constant(), float(dT)) for dT in rng.uniform(-5, 5, 20))
    checks.append(at_least("linear", "bowl_fixed_point", float(bowl), 1.0))
    return checks


def _quadratic_seed(shift: float) -> ModeVector:
    seed = correction_map([QUADRATIC_AMPLITUDE])
    return seed + ModeVector(1, {unit_index(1): shift}, seed.cap)


def _run(seed: ModeVector, span: Sequence[float], solver: SolverConfig, snapshot_every: int = 10, quiet: bool = True):
    u0 = seed_state(PDE_DIMS, solver, modes=seed, cutoff_radius=SEED_CUTOFF, tau=span[0])
    return simulate(u0, (span[0], span[1]), solver, snapshot_every, quiet)


def shoot_constant_mode(solver: SolverConfig = PDE_SOLVER, horizons: Sequence[float] = SHOOTING_HORIZONS) -> float:
    """Constant-mode seed shift that keeps the unstable mode small up to the last horizon.

    Forward in time the constant mode grows like e^τ; one secant step per
    horizon cancels its projection at that horizon.
    """
    shift = 0.0
    for horizon in horizons:
        delta = 1e-3 * abs(QUADRATIC_AMPLITUDE) * math.exp(-horizon)
        values = []
        for trial in (shift, shift + delta):
            final = _run(_quadratic_seed(trial), (0.0, horizon), solver, snapshot_every=10**9)[-1]
            values.append(u_plus(final, SEED_CUTOFF, PDE_TRACKER)[unit_index(1)])
        slope = (values[1] - values[0]) / delta
        if slope == 0.0:
            break
        shift -= values[0] / slope
        logger.debug(f"horizon {horizon}: constant mode {values[0]:.3g}, shift now {shift:.17g}")
    return shift


def _pde(ctx: VerifyContext) -> List[Check]:
    dims = PDE_DIMS
    checks = []
    cubic = ModeVector(1, {(3,): 0.05, (2,): 0.02})
    orders = spatial_order(cubic, dims)["orders"]
    checks.append(at_least("pde", "rhs_spatial_order", min(orders) if orders else math.nan, 1.8))
    small = SolverConfig(h=0.1, dt=0.01, R_dom=6.0)
    checks.append(at_most("pde", "cylinder_fixed_point", fixed_point_drift(dims, small, 50), 0.0))

    shift = shoot_constant_mode()
    trajectory = _run(_quadratic_seed(shift), PDE_SPAN, PDE_SOLVER, quiet=ctx.quiet)
    checks.append(at_most("pde", "reflection_symmetry", reflection_defect(trajectory[-1]), 1e-6))
    records = track(trajectory, PDE_TRACKER, ctx.quiet)
    report = classify_phases(records, PDE_TRACKER.c0, PDE_TRACKER.xi, PDE_TRACKER.transient)
    logger.info(f"quadratic run phases {report.segments}")
    fraction = report.sqrt2_fraction_min
    checks.append(at_least("pde", "sqrt2_law_fraction", math.nan if fraction is None else fraction, 0.95))
    checks.append(at_least("pde", "phases_ordered", float(report.ordered), 1.0))

    system = BarUSystem.for_dims(dims)
    quadratic = [r for r in records if r.phase == "quadratic" and r.tau >= PDE_TRACKER.transient]
    try:
        exponent = compare_to_pde(quadratic, system)["exponent"]
    except ModeLabError as e:
        logger.error(f"U0 vs Ubar comparison failed: {e}")
        exponent = math.nan
    checks.append(at_least("pde", "U0_vs_Ubar_decay_exponent", exponent, 2.5))

    constants = []
    for refine in (1, 2):
        solver = SolverConfig(h=PDE_SOLVER.h / refine, dt=PDE_SOLVER.dt / refine, R_dom=PDE_SOLVER.R_dom)
        run = _run(_quadratic_seed(shift), RESIDUAL_SPAN, solver, snapshot_every=10 * refine)
        constants.append(fit_residual_constant(track(run, PDE_TRACKER), PDE_TRACKER.J))
    checks.append(at_most("pde", "residual_constant_drift", abs(constants[1] / constants[0] - 1.0), 0.5))

    for mode, attr, expected, span in (((1,), "U12_norm", 0.5, (0.0, 4.0)), ((0,), "U1_norm", 1.0, (0.0, 2.0))):
        seed = ModeVector(1, {mode: RATE_AMPLITUDE})
        run = _run(seed, span, PDE_SOLVER)
        rec = track(run, PDE_TRACKER)
        rate = fit_growth_rate([r.tau for r in rec], [getattr(r, attr) for r in rec])
        label = "linear" if expected == 0.5 else "constant"
        checks.append(at_most("pde", f"{label}_growth_rate_error", abs(rate / expected - 1.0), 0.05))
        single = all(phase_of(r, PDE_TRACKER.c0) == label for r in rec)
        checks.append(at_least("pde", f"{label}_single_phase", float(single), 1.0))
    return checks


SUITES: Dict[str, Callable[[VerifyContext], List[Check]]] = {
    "hermite": _hermite,
    "taylor": _taylor,
    "constants": _constants,
    "matrix-ode": _matrix_ode,
    "q-invariant": _q_invariant,
    "linear": _linear,
    "pde": _pde,
}


def suite_names(name: str) -> List[str]:
    """Suites selected by `name` ("all" selects every suite).

    Raises:
        ValueError: unknown suite
    """
    if name == "all":
        return list(SUITES)
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose one of {', '.join(SUITES)} or all")
    return [name]


def verify(
    name: str, out_dir: Optional[PathLike] = None, rng_seed: int = 0, quiet: bool = True
) -> VerifySummary:
    """Run one suite or all of them.

    A suite that raises is recorded as a failed `error` check and the remaining
    suites still run.

    Args:
        name (str): suite name or "all"
        out_dir (Optional[PathLike], optional): directory for checks.csv, verify.json and manifest.json. Defaults to None.
        rng_seed (int, optional): seed of the randomized checks. Defaults to 0.
        quiet (bool, optional): disable progress bars. Defaults to True.

    Returns:
        VerifySummary: all checks

    Raises:
        ValueError: unknown suite
    """
    names = suite_names(name)
    ctx = VerifyContext(rng_seed, Path(out_dir) if out_dir is not None else None, quiet)
    if ctx.out_dir is not None:
        ctx.out_dir.mkdir(parents=True, exist_ok=True)
    summary = VerifySummary(names)
    for suite in names:
        logger.info(f"running suite {suite}")
        try:
            checks = SUITES[suite](ctx)
        except (ModeLabError, ValueError, ArithmeticError) as e:
            logger.error(f"suite {suite} raised: {e}")
            checks = [Check(suite, "error", math.nan, math.nan, "<=")]
        for check in checks:
            level = logging.INFO if check.passed else logging.ERROR
            logger.log(level, f"{suite}.{check.name}: {check.value:.6g} {check.relation} {check.threshold:.6g}")
        summary.checks.extend(checks)
    if ctx.out_dir is not None:
        summary.write(ctx.out_dir)
    return summary
