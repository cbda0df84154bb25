from .cutoff import cutoff
from .grid import RadialGraphState, SolverConfig
from .seed import seed_state
from .snapshot import read_snapshot, write_binary, write_csv
from .solver import (
    BlowUpError,
    GeometricDegenerationError,
    LinearSolveError,
    Trajectory,
    nonlinear_term,
    rhs,
    simulate,
    step,
)

__all__ = [
    "BlowUpError",
    "GeometricDegenerationError",
    "LinearSolveError",
    "RadialGraphState",
    "SolverConfig",
    "Trajectory",
    "cutoff",
    "nonlinear_term",
    "read_snapshot",
    "rhs",
    "seed_state",
    "simulate",
    "step",
    "write_binary",
    "write_csv",
]
