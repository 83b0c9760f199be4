"""Finite element experiments for obstacle problems with degenerate coercivity and L^1 data."""

from .params import ProblemParams, check_admissible, q_range
from .mesh import GridFunction, Mesh
from .solver import ProblemSpec, Solution, SolverConfig, solve_vi
from .entropy import verify_entropy

__all__ = [
    "ProblemParams",
    "check_admissible",
    "q_range",
    "GridFunction",
    "Mesh",
    "ProblemSpec",
    "Solution",
    "SolverConfig",
    "solve_vi",
    "verify_entropy",
]

__version__ = "0.1.0"
