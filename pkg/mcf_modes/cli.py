"""Command line interface."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from mcf_modes.constants import constants_path, write_constants_file
from mcf_modes.hermite.basis import Dimensions
from mcf_modes.linear_mode import FitError
from mcf_modes.odi import TrackerConfig, TrackerError, measure, phase_of
from mcf_modes.pde.snapshot import SnapshotError, read_snapshot
from mcf_modes.quadratic_mode import (
    BarUSystem,
    SpectralTrajectory,
    ThresholdNotCrossedError,
    fit_asymptotics,
    integrate_barU,
    q_invariant,
    q_inverse,
    write_q_report,
)
from mcf_modes.scenario import ConfigError, RunError, Scenario, run
from mcf_modes.utils import ModeLabError, as_sym_matrix, write_csv
from mcf_modes.verify import SUITES, suite_names, verify

logger = logging.getLogger(__name__)


def _configure_logging(verbose: int) -> None:
    level = max(logging.DEBUG, logging.WARNING - 10 * verbose)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _print(obj: Any) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _read_matrix_file(path: str, keys: Sequence[str]) -> Tuple[str, List[List[float]], Dict[str, Any]]:
    """Matrix file: a JSON list of rows, or an object with one of `keys` (plus optional "n", "tau0")."""
    with open(path) as f:
        data = json.load(f)
    if isinstance(data, list):
        return keys[0], data, {}
    for key in keys:
        if key in data:
            return key, data[key], data
    raise ConfigError(f"{path} holds none of {', '.join(keys)}")


def _system(k: int, n: Optional[int]) -> BarUSystem:
    return BarUSystem.for_dims(Dimensions(n if n is not None else k + 1, k))


def _write_spectral_csv(traj: SpectralTrajectory, path: Path) -> Path:
    header = ["tau"] + [f"lambda_{i + 1}" for i in range(traj.k)]
    rows = ([float(t)] + [float(v) for v in lam] for t, lam in zip(traj.taus, traj.lambdas))
    return write_csv(path, header, rows)


def _cmd_simulate(args: argparse.Namespace) -> int:
    scenario = Scenario.from_file(args.config)
    report = run(scenario, quiet=args.quiet, run_dir=args.out)
    _print(report.to_dict())
    return 0


def _cmd_modes(args: argparse.Namespace) -> int:
    dims = Dimensions(args.n, args.k) if args.n is not None else None
    state = read_snapshot(args.snapshot, dims)
    config = TrackerConfig(lam=args.lam, R_fixed=args.R)
    record = measure(state, config)
    _print(
        {
            "tau": record.tau,
            "R": record.R,
            "clamped": record.clamped,
            "Uplus": record.Uplus.to_dict(),
            "Uminus": record.Uminus,
            "phase": phase_of(record, config.c0),
        }
    )
    return 0


def _cmd_matrix_ode(args: argparse.Namespace) -> int:
    key, entries, data = _read_matrix_file(args.matrix, ("U0", "Q"))
    matrix = as_sym_matrix(entries, key)
    system = _system(matrix.shape[0], data.get("n", args.n))
    if key == "Q":
        traj = q_inverse(matrix, system, backward=args.backward, forward=args.forward)
    else:
        tau0 = float(data.get("tau0", 0.0))
        traj = integrate_barU(matrix, (tau0, tau0 + args.forward), system)
        traj = traj.extend(tau0 - args.backward)
    summary: Dict[str, Any] = {"k": traj.k, "frame": traj.frame.tolist(), "span": list(traj.span), "blowup_tau": traj.blowup_tau}
    if args.out:
        summary["csv"] = str(_write_spectral_csv(traj, Path(args.out) / "spectral_values.csv"))
    _print(summary)
    return 0


def _cmd_q_invariant(args: argparse.Namespace) -> int:
    with open(args.config) as f:
        data = json.load(f)
    unknown = set(data) - {"U0", "tau0", "n", "fit_to"}
    if unknown:
        raise ConfigError(f"unknown key '{sorted(unknown)[0]}'")
    matrix = as_sym_matrix(data["U0"], "U0")
    system = _system(matrix.shape[0], data.get("n"))
    tau0 = float(data.get("tau0", 0.0))
    traj = integrate_barU(matrix, (tau0, tau0 + 1.0), system)
    q = q_invariant(traj)
    fit = None
    if data.get("fit_to") is not None and not traj.is_zero:
        fit = fit_asymptotics(traj.extend(float(data["fit_to"])))
    out = Path(args.out) if args.out else None
    if out is not None:
        write_q_report(q, out / "q_report.json", fit)
    document = q.to_dict()
    if fit is not None:
        document.update(
            {
                "A": fit.A.tolist(),
                "Cstarstar": fit.Cstarstar,
                "fit_residual": fit.residual,
                "fit_decay_exponent": fit.decay_exponent,
            }
        )
    _print(document)
    return 0


def _cmd_q_inverse(args: argparse.Namespace) -> int:
    key, entries, data = _read_matrix_file(args.matrix, ("Q",))
    matrix = as_sym_matrix(entries, key)
    traj = q_inverse(matrix, _system(matrix.shape[0], data.get("n", args.n)), backward=args.backward)
    summary: Dict[str, Any] = {"k": traj.k, "span": list(traj.span), "Q_roundtrip": q_invariant(traj).Q.tolist()}
    if args.out:
        summary["csv"] = str(_write_spectral_csv(traj, Path(args.out) / "spectral_values.csv"))
    _print(summary)
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    summary = verify(args.suite, args.out, args.seed, args.quiet)
    _print(summary.to_dict())
    return 0 if summary.passed else 1


def _cmd_constants(args: argparse.Namespace) -> int:
    path = Path(args.out) / "constants.json" if args.out else constants_path()
    write_constants_file(path, order=args.order, quiet=args.quiet)
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per entry point."""
    parser = argparse.ArgumentParser(prog="mcf-modes", description="Mode analysis of rescaled mean curvature flow.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    parser.add_argument("--quiet", action="store_true", help="disable progress bars")
    parser.add_argument("--out", default=None, help="run directory for outputs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario file")
    p.add_argument("config")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("modes", help="project a snapshot onto the modes above lambda")
    p.add_argument("snapshot")
    p.add_argument("--lambda", dest="lam", type=float, default=-1.5)
    p.add_argument("--R", type=float, default=8.0)
    p.add_argument("--n", type=int, default=None, help="ambient dimension, needed for CSV snapshots")
    p.add_argument("--k", type=int, default=1)
    p.set_defaults(func=_cmd_modes)

    p = sub.add_parser("matrix-ode", help="integrate the matrix ODE from a U0 or Q file")
    p.add_argument("matrix")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--backward", type=float, default=100.0)
    p.add_argument("--forward", type=float, default=1.0)
    p.set_defaults(func=_cmd_matrix_ode)

    p = sub.add_parser("q-invariant", help="compute Q for an initial matrix")
    p.add_argument("config")
    p.set_defaults(func=_cmd_q_invariant)

    p = sub.add_parser("q-inverse", help="trajectory realizing a given Q")
    p.add_argument("matrix")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--backward", type=float, default=100.0)
    p.set_defaults(func=_cmd_q_inverse)

    p = sub.add_parser("verify", help=f"run a verification suite ({', '.join(SUITES)} or all)")
    p.add_argument("suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("constants", help="write the derived constants file")
    p.add_argument("--order", type=int, default=None)
    p.set_defaults(func=_cmd_constants)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns 0 on success, 1 on failure and 2 on usage errors."""
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    if args.command == "verify":
        try:
            suite_names(args.suite)
        except ValueError as e:
            parser.print_usage(sys.stderr)
            print(f"mcf-modes: error: {e}", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except (ConfigError, SnapshotError, OSError) as e:
        logger.error(f"{e}")
        return 2
    except (RunError, TrackerError, ThresholdNotCrossedError, FitError) as e:
        logger.error(f"{e}")
        return 1
    except (ModeLabError, ValueError) as e:
        logger.error(f"{e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
