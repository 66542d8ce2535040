"""Presolve, bounded revised simplex and branch-and-bound."""

from .bnb import MilpOutcome, branch_and_bound, relative_gap, solve_lp
from .options import SolveOptions, Status
from .presolve import PresolveResult, presolve
from .simplex import Basis, LpOutcome, SimplexEngine

__all__ = [
    "Basis", "LpOutcome", "MilpOutcome", "PresolveResult", "SimplexEngine", "SolveOptions", "Status",
    "branch_and_bound", "presolve", "relative_gap", "solve_lp",
]
