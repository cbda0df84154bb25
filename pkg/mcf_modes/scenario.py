"""Scenario configuration, the end-to-end run pipeline and the sweep runner."""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
import scipy

from mcf_modes.constants import constants_path, load_constants_file, write_constants_file
from mcf_modes.hermite.basis import DegreeCapError, Dimensions
from mcf_modes.hermite.modes import ModeVector
from mcf_modes.linear_mode import (
    FitError,
    LeadingTrajectory,
    extract_asymptotics,
    write_asymptotics_report,
)
from mcf_modes.odi import (
    PhaseReport,
    TrackerConfig,
    TrackerError,
    TrackRecord,
    classify_phases,
    fit_growth_rate,
    fit_residual_constant,
    leading_modes,
    track,
    write_track_csv,
)
from mcf_modes.pde import SolverConfig, seed_state, simulate, write_binary
from mcf_modes.pde import write_csv as write_snapshot_csv
from mcf_modes.pde.seed import ExpressionError, compile_expression
from mcf_modes.quadratic_mode import (
    BarUSystem,
    compare_to_pde,
    integrate_barU,
    q_invariant,
    spectral_reduce,
    write_q_report,
)
from mcf_modes.types import PathLike
from mcf_modes.utils import (
    ModeLabError,
    canonical_json,
    checksum_bytes,
    checksum_file,
    env_int,
    hasher_name,
    new_hasher,
    package_version,
    write_json,
)

logger = logging.getLogger(__name__)

SCENARIO_KEYS = (
    "name",
    "dims",
    "solver",
    "tracker",
    "seed",
    "tau_span",
    "output_dir",
    "rng_seed",
    "snapshot_every",
)
SEED_KEYS = ("modes", "expression", "cutoff_radius")
DIMS_KEYS = ("n", "k")


class ConfigError(ModeLabError):
    """exceptions thrown by malformed scenario files."""

    pass


class RunError(ModeLabError):
    """exceptions thrown by a scenario run, tagged with the failing module."""

    def __init__(self, module: str, message: str) -> None:
        """Tag `message` with `module`."""
        super().__init__(f"[{module}] {message}")
        self.module = module


def _check_keys(data: Any, allowed: Iterable[str], where: str) -> None:
    if not isinstance(data, Mapping):
        raise ConfigError(f"'{where or 'scenario'}' must be an object")
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key '{where + '.' if where else ''}{key}'")


@dataclass(frozen=True)
class SeedSpec:
    """Initial data: mode amplitudes {"d1,...,dk": amplitude} or a field expression, times ω_R."""

    modes: Optional[Dict[str, float]] = None
    expression: Optional[str] = None
    cutoff_radius: Optional[float] = 8.0

    def mode_vector(self, k: int) -> Optional[ModeVector]:
        """Seed modes as a `ModeVector`."""
        if self.modes is None:
            return None
        return ModeVector.from_dict(self.modes, k)

    def to_dict(self) -> Dict[str, Any]:
        """Serialize."""
        return {
            "modes": None if self.modes is None else dict(self.modes),
            "expression": self.expression,
            "cutoff_radius": self.cutoff_radius,
        }


@dataclass(frozen=True)
class Scenario:
    """One simulation with its tracking and analysis settings."""

    dims: Dimensions
    solver: SolverConfig
    tracker: TrackerConfig
    seed: SeedSpec
    tau_span: Tuple[float, float]
    name: str = "scenario"
    output_dir: str = "runs"
    rng_seed: int = 0
    snapshot_every: int = 10

    @property
    def run_dir(self) -> Path:
        """Directory all outputs of this scenario go to."""
        return Path(self.output_dir) / self.name

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Scenario":
        """Parse and validate a scenario mapping.

        Args:
            data (Mapping[str, Any]): parsed JSON object

        Returns:
            Scenario: validated scenario

        Raises:
            ConfigError: unknown key (named by dotted path), missing or invalid field
        """
        _check_keys(data, SCENARIO_KEYS, "")
        for required in ("dims", "seed", "tau_span"):
            if required not in data:
                raise ConfigError(f"missing key '{required}'")

        _check_keys(data["dims"], DIMS_KEYS, "dims")
        try:
            dims = Dimensions(int(data["dims"]["n"]), int(data["dims"]["k"]))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid 'dims': {e}") from e

        solver = _sub_config(SolverConfig, data.get("solver", {}), "solver")
        tracker = _sub_config(TrackerConfig, data.get("tracker", {}), "tracker")
        seed = _parse_seed(data["seed"], dims, solver)

        try:
            tau_span = (float(data["tau_span"][0]), float(data["tau_span"][1]))
        except (TypeError, ValueError, IndexError) as e:
            raise ConfigError(f"invalid 'tau_span': {e}") from e
        if len(data["tau_span"]) != 2 or not tau_span[1] > tau_span[0]:
            raise ConfigError("'tau_span' must be [tau_start, tau_end] with tau_end > tau_start")

        snapshot_every = data.get("snapshot_every", 10)
        if not isinstance(snapshot_every, int) or snapshot_every < 1:
            raise ConfigError("'snapshot_every' must be a positive integer")
        rng_seed = data.get("rng_seed", 0)
        if not isinstance(rng_seed, int):
            raise ConfigError("'rng_seed' must be an integer")
        return cls(
            dims,
            solver,
            tracker,
            seed,
            tau_span,
            str(data.get("name", "scenario")),
            str(data.get("output_dir", "runs")),
            rng_seed,
            snapshot_every,
        )

    @classmethod
    def from_file(cls, path: PathLike) -> "Scenario":
        """Read a JSON scenario file."""
        try:
            with open(path) as f:
                data = json.load(f)
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot read scenario {path}: {e}") from e
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        """Serialize; `from_dict(to_dict())` reproduces the scenario."""
        return {
            "name": self.name,
            "dims": self.dims.to_dict(),
            "solver": self.solver.to_dict(),
            "tracker": self.tracker.to_dict(),
            "seed": self.seed.to_dict(),
            "tau_span": list(self.tau_span),
            "output_dir": self.output_dir,
            "rng_seed": self.rng_seed,
            "snapshot_every": self.snapshot_every,
        }

    def config_hash(self) -> str:
        """Checksum of the canonical JSON form."""
        return checksum_bytes(canonical_json(self.to_dict()).encode())


def _sub_config(cls: Any, data: Any, where: str) -> Any:
    if not isinstance(data, Mapping):
        raise ConfigError(f"'{where}' must be an object")
    try:
        return cls.from_dict(data)
    except KeyError as e:
        raise ConfigError(f"unknown key '{where}.{e.args[0]}'") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid '{where}': {e}") from e


def _parse_seed(data: Any, dims: Dimensions, solver: SolverConfig) -> SeedSpec:
    _check_keys(data, SEED_KEYS, "seed")
    modes = data.get("modes")
    expression = data.get("expression")
    if (modes is None) == (expression is None):
        raise ConfigError("'seed' needs exactly one of 'modes' or 'expression'")
    cutoff_radius = data.get("cutoff_radius", 8.0)
    if cutoff_radius is not None:
        cutoff_radius = float(cutoff_radius)
        if not 1.0 <= cutoff_radius <= solver.R_dom:
            raise ConfigError(f"'seed.cutoff_radius' must lie in [1, R_dom={solver.R_dom}]")
    if modes is not None:
        if not isinstance(modes, Mapping):
            raise ConfigError("'seed.modes' must map \"d1,...,dk\" to amplitudes")
        try:
            vector = ModeVector.from_dict(modes, dims.k)
        except DegreeCapError as e:
            raise ConfigError(f"invalid 'seed.modes': {e}") from e
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid 'seed.modes': {e}") from e
        for key, amplitude in modes.items():
            if abs(float(amplitude)) >= solver.blowup_guard:
                raise ConfigError(f"'seed.modes.{key}' exceeds the solver guard {solver.blowup_guard}")
        modes = {key: float(vector.coefficient(tuple(int(d) for d in key.split(",")))) for key in modes}
    else:
        try:
            compile_expression(str(expression), dims.k)(np.zeros((1, dims.k)))
        except ExpressionError as e:
            raise ConfigError(f"invalid 'seed.expression': {e}") from e
        expression = str(expression)
    return SeedSpec(modes, expression, cutoff_radius)


@dataclass
class RunReport:
    """Outcome of `run`."""

    name: str
    run_dir: Path
    phases: PhaseReport
    summary: Dict[str, Any] = field(default_factory=dict)
    files: List[Path] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        """Serialize (paths relative to the run directory)."""
        return {
            "name": self.name,
            "phases": self.phases.to_dict(),
            "summary": self.summary,
            "files": [p.name for p in self.files],
        }


def _constants_file(run_dir: Path, dims: Dimensions, quiet: bool) -> Path:
    path = constants_path(run_dir)
    if path.exists():
        try:
            if ("Cstar", dims.codim) in load_constants_file(path):
                return path
        except ModeLabError as e:
            logger.warning(f"{e}; regenerating")
    else:
        logger.warning(f"no constants file at {path}; regenerating")
    return write_constants_file(path, sorted({1, 2, 3, dims.codim}), quiet=quiet)


def _rates(records: List[TrackRecord], report: PhaseReport) -> Dict[str, Optional[float]]:
    rates: Dict[str, Optional[float]] = {"linear": None, "constant": None}
    for phase, attr in (("linear", "U12_norm"), ("constant", "U1_norm")):
        spans = [s for s in report.segments if s[0] == phase]
        if not spans:
            continue
        _, lo, hi = max(spans, key=lambda s: s[2] - s[1])
        window = [r for r in records if lo <= r.tau <= hi]
        try:
            rates[phase] = fit_growth_rate([r.tau for r in window], [getattr(r, attr) for r in window])
        except TrackerError:
            pass
    return rates


def _quadratic_summary(records: List[TrackRecord], scenario: Scenario, run_dir: Path) -> Dict[str, Any]:
    system = BarUSystem.for_dims(scenario.dims)
    last = leading_modes(records[-1]).c
    frame, eigs = spectral_reduce(last)
    match = frame @ np.diag(np.minimum(eigs, 0.0)) @ frame.T
    tau_end = float(records[-1].tau)
    q = q_invariant(integrate_barU(match, (tau_end, tau_end + 1.0), system))
    start = scenario.tau_span[0] + scenario.tracker.transient
    try:
        comparison: Optional[Dict[str, Any]] = compare_to_pde(records, system, start)
    except FitError as e:
        logger.warning(f"U0 vs Ubar comparison skipped: {e}")
        comparison = None
    exponent = None if comparison is None else comparison["exponent"]
    path = write_q_report(q, run_dir / "q_report.json", residuals={"pde_decay_exponent": exponent})
    return {"pipeline": "quadratic", "Q": q.Q.tolist(), "tau_U": q.tau_U, "c": q.c, "pde_decay_exponent": exponent, "report": path.name}


def _linear_summary(records: List[TrackRecord], run_dir: Path) -> Dict[str, Any]:
    traj = LeadingTrajectory.from_modes([r.tau for r in records], [leading_modes(r) for r in records])
    asym = extract_asymptotics(traj)
    path = write_asymptotics_report(asym, run_dir / "asymptotics.json")
    return {"pipeline": "linear", **asym.to_dict(), "report": path.name}


def run(scenario: Scenario, quiet: bool = True, run_dir: Optional[PathLike] = None) -> RunReport:
    """Simulate, track, classify and analyse one scenario, writing all outputs.

    Outputs under the run directory: `track.csv`, initial and final snapshots
    (binary and CSV), `report.json`, the pipeline report (`q_report.json` or
    `asymptotics.json`) and `manifest.json`.

    Args:
        scenario (Scenario): validated scenario
        quiet (bool, optional): disable progress bars. Defaults to True.
        run_dir (Optional[PathLike], optional): output directory. Defaults to `scenario.run_dir`.

    Returns:
        RunReport: phases, pipeline summary and written files

    Raises:
        RunError: failure of any stage, tagged with its module
    """
    out = Path(run_dir) if run_dir is not None else scenario.run_dir
    out.mkdir(parents=True, exist_ok=True)
    dims = scenario.dims
    logger.info(f"running scenario {scenario.name!r} into {out}")

    try:
        constants = _constants_file(out, dims, quiet)
    except ModeLabError as e:
        raise RunError("nonlinear_taylor", str(e)) from e

    try:
        u0 = seed_state(
            dims,
            scenario.solver,
            modes=scenario.seed.mode_vector(dims.k),
            expression=scenario.seed.expression,
            cutoff_radius=scenario.seed.cutoff_radius,
            tau=scenario.tau_span[0],
        )
        trajectory = simulate(u0, scenario.tau_span, scenario.solver, scenario.snapshot_every, quiet)
    except (ModeLabError, ValueError) as e:
        raise RunError("rmcf_pde", str(e)) from e

    try:
        records = track(trajectory, scenario.tracker, quiet)
        phases = classify_phases(records, scenario.tracker.c0, scenario.tracker.xi, scenario.tracker.transient)
    except (ModeLabError, ValueError) as e:
        raise RunError("odi_tracker", str(e)) from e

    report = RunReport(scenario.name, out, phases)
    report.files.append(write_track_csv(records, out / "track.csv"))
    for label, state in (("initial", trajectory[0]), ("final", trajectory[-1])):
        report.files.append(write_binary(state, out / f"snapshot_{label}.bin"))
        report.files.append(write_snapshot_csv(state, out / f"snapshot_{label}.csv"))

    summary: Dict[str, Any] = {"pipeline": "none"}
    if phases.dominant == "quadratic":
        try:
            summary = _quadratic_summary(records, scenario, out)
        except (ModeLabError, ValueError) as e:
            raise RunError("quadratic_mode", str(e)) from e
        report.files.append(out / summary["report"])
    elif phases.dominant in ("linear", "constant"):
        try:
            summary = _linear_summary(records, out)
        except (ModeLabError, ValueError) as e:
            raise RunError("linear_mode", str(e)) from e
        report.files.append(out / summary["report"])
    summary["rates"] = _rates(records, phases)
    try:
        summary["residual_constant"] = fit_residual_constant(records, scenario.tracker.taylor_order)
    except TrackerError:
        summary["residual_constant"] = None
    summary["cylinder_norm_factor"] = dims.cylinder_norm_factor
    report.summary = summary

    report.files.append(write_json(out / "report.json", report.to_dict()))
    report.files.append(write_manifest(scenario, out, constants, report.files))
    logger.info(f"scenario {scenario.name!r}: dominant phase {phases.dominant}, pipeline {summary['pipeline']}")
    return report


def write_manifest(scenario: Scenario, run_dir: Path, constants: Path, files: Iterable[Path]) -> Path:
    """Write `manifest.json`: config hash, constants checksum, versions and output checksums."""
    document = {
        "scenario": scenario.name,
        "config_hash": scenario.config_hash(),
        "hash_algorithm": hasher_name(new_hasher()),
        "constants_checksum": checksum_file(constants),
        "versions": versions(),
        "files": {p.name: checksum_file(p) for p in sorted(files)},
    }
    return write_json(run_dir / "manifest.json", document)


def versions() -> Dict[str, str]:
    """Versions recorded in manifests."""
    return {"mcf-modes": package_version(), "numpy": np.__version__, "scipy": scipy.__version__}


class SweepRunner:
    """Run independent scenarios on a bounded thread pool."""

    def __init__(self, max_num_workers: Optional[int] = None) -> None:
        """Sweep runner.

        Args:
            max_num_workers (Optional[int], optional): pool size. Defaults to `MCF_MODES_THREADS` or 4.
        """
        self.max_num_workers = max_num_workers or env_int("MCF_MODES_THREADS", 4)

    def run_all(self, scenarios: Iterable[Scenario], quiet: bool = True) -> List[Any]:
        """Run every scenario; each entry is a `RunReport` or the `RunError` it raised.

        Args:
            scenarios (Iterable[Scenario]): scenarios with distinct run directories
            quiet (bool, optional): disable progress bars. Defaults to True.

        Returns:
            List[Any]: results in input order
        """
        scenarios = list(scenarios)
        dirs = [s.run_dir for s in scenarios]
        if len(set(dirs)) != len(dirs):
            raise ValueError("scenarios in a sweep must write to distinct run directories")
        results: List[Any] = []
        with ThreadPoolExecutor(max_workers=self.max_num_workers, thread_name_prefix="mcf-modes") as pool:
            futures = [pool.submit(run, s, quiet) for s in scenarios]
            for scenario, future in zip(scenarios, futures):
                try:
                    results.append(future.result())
                except RunError as e:
                    logger.error(f"scenario {scenario.name!r} failed: {e}")
                    results.append(e)
        failed = sum(isinstance(r, RunError) for r in results)
        logger.info(f"sweep finished: {len(results) - failed} ok, {failed} failed")
        return results

