"""Fold of the positive branch for concave-convex elliptic systems, and its minimax characterization."""

__version__ = "0.1.0"

from .continuation import (Branch, BranchPoint, ContinuationOptions, FoldPoint, branch_start, detect_fold,
                           fold_by_bisection, lambda_star_minimax, nonexistence_probe, refine_fold_moore_spence,
                           refine_minimax, stable_sequence_extract, trace_branch, verify_branch)
from .mesh import Grid, build_grid
from .model import ProblemSpec, power_coupled, scalar_abc
from .operator import assemble_jacobian, assemble_residual, newton_solve
from .quotient import inner_inf_probe, rayleigh_extended
from .spectral import classify_stability, smallest_eigenpair
from .sublinear import baseline_state, solve_brezis_oswald

__all__ = [
    "Branch", "BranchPoint", "ContinuationOptions", "FoldPoint", "Grid", "ProblemSpec",
    "assemble_jacobian", "assemble_residual", "baseline_state", "branch_start", "build_grid",
    "classify_stability", "detect_fold", "fold_by_bisection", "inner_inf_probe", "lambda_star_minimax",
    "newton_solve", "nonexistence_probe", "power_coupled", "rayleigh_extended", "refine_fold_moore_spence",
    "refine_minimax", "scalar_abc", "smallest_eigenpair", "solve_brezis_oswald", "stable_sequence_extract",
    "trace_branch", "verify_branch",
]
