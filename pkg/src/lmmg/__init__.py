"""Adaptive local minimax Galerkin solver for semilinear elliptic problems."""

from .driver import LmmgConfig, RunLog, restart_with_subspace, run_lmmg, sigma
from .fespace import FeFunction, FeSpace, nodal_interpolant, prolongate
from .mesh import Triangulation, create_square_mesh, refine
from .problem import EnergyForm, SemilinearProblem, builtin_problems, get_problem

__all__ = [
    "EnergyForm",
    "FeFunction",
    "FeSpace",
    "LmmgConfig",
    "RunLog",
    "SemilinearProblem",
    "Triangulation",
    "builtin_problems",
    "create_square_mesh",
    "get_problem",
    "nodal_interpolant",
    "prolongate",
    "refine",
    "restart_with_subspace",
    "run_lmmg",
    "sigma",
]
