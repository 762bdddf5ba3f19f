"""Generic sparse LP/MILP solver: bounded-variable revised simplex + branch and bound."""

from .problem import MilpProblem, MilpSolution, SolveStatus, write_lp
from .simplex import solve_lp
from .branch_bound import MilpConfig, solve_milp

__all__ = [
    "MilpProblem",
    "MilpSolution",
    "SolveStatus",
    "MilpConfig",
    "solve_lp",
    "solve_milp",
    "write_lp",
]
