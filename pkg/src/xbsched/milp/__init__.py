"""Self-contained MILP layer: model container, bounded simplex, branch-and-bound."""

from .branch import (STATUS_FEASIBLE, STATUS_INFEASIBLE, STATUS_NO_INCUMBENT, STATUS_OPTIMAL,
                     STATUS_UNBOUNDED, MilpSolution, SolveParams, relative_gap, solve_milp)
from .lpfile import to_lp_string, write_lp
from .model import EQ, GE, LE, Incumbent, MilpModel, ModelError, warm_start
from .simplex import LPNumericalError, LPResult, solve_lp, solve_lp_arrays

__all__ = [
    "EQ", "GE", "LE", "Incumbent", "LPNumericalError", "LPResult", "MilpModel", "MilpSolution",
    "ModelError", "STATUS_FEASIBLE", "STATUS_INFEASIBLE", "STATUS_NO_INCUMBENT", "STATUS_OPTIMAL",
    "STATUS_UNBOUNDED", "SolveParams", "relative_gap", "solve_lp", "solve_lp_arrays", "solve_milp",
    "to_lp_string", "warm_start", "write_lp",
]
