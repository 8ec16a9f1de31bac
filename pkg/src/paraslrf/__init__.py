"""Rational-filter subspace iteration for symmetric-definite pencils."""

__version__ = "0.1.0"

from .driver import DriverConfig, EigResult, solve
from .filters import FilterSpec, build_filter, eval_filter
from .harness import GroupPlan, Harness, RunReport
from .krylov import SolverConfig, build_preconditioner, gcr_solve
from .linalg import Pencil
from .problems import gen_fem1d, gen_laplace3d, load_pencil

__all__ = [
    "DriverConfig", "EigResult", "solve",
    "FilterSpec", "build_filter", "eval_filter",
    "GroupPlan", "Harness", "RunReport",
    "SolverConfig", "build_preconditioner", "gcr_solve",
    "Pencil", "gen_fem1d", "gen_laplace3d", "load_pencil",
]
