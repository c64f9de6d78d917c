"""Self-contained LP / MILP solver: bounded simplex plus branch and bound."""

from .bnb import Budget, check_feasible, solve_milp
from .kernels import BACKEND as KERNEL_BACKEND
from .model import (BIG, EQ, GE, LE, BudgetExhausted, MilpModel, MilpSolution, ModelError,
                    NumericalError, Status)
from .mps import write_mps
from .simplex import solve_lp

__all__ = [
    "BIG", "EQ", "GE", "LE", "Budget", "BudgetExhausted", "KERNEL_BACKEND", "MilpModel",
    "MilpSolution", "ModelError", "NumericalError", "Status", "check_feasible", "solve_lp",
    "solve_milp", "write_mps",
]
