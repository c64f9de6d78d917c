"""Mixed-integer linear program container and solve result."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

BIG = 1e9

INT_TOL = 1e-6
FEAS_TOL = 1e-6
OPT_TOL = 1e-9

LE, EQ, GE = "<=", "==", ">="
_RELATIONS = {"<=": LE, "<": LE, "==": EQ, "=": EQ, ">=": GE, ">": GE}


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    TIME_LIMIT_SUBOPTIMAL = "TimeLimit-Suboptimal"
    # budget hit before any incumbent was found: feasibility unknown
    BUDGET_EXHAUSTED = "BudgetExhausted-NoIncumbent"

    @property
    def has_solution(self) -> bool:
        return self in (Status.OPTIMAL, Status.TIME_LIMIT_SUBOPTIMAL)


class ModelError(ValueError):
    pass


class NumericalError(RuntimeError):
    """Raised when the simplex cannot make numerically safe progress."""


class BudgetExhausted(RuntimeError):
    """Search budget ran out without any feasible point; feasibility unknown."""


@dataclass
class Constraint:
    coeffs: Dict[int, float]
    rel: str
    rhs: float


Coeffs = Union[Mapping[int, float], Sequence[float], np.ndarray]


class MilpModel:
    """A (mixed-integer) linear program over ``num_vars`` bounded variables.

    Constraint rows are stored sparsely as ``{column: coefficient}`` maps;
    :meth:`row` gives the dense view. Bounds are clamped to ``[-BIG, BIG]``.
    """

    def __init__(self, num_vars: int, sense: str = "min"):
        if num_vars < 0:
            raise ModelError("num_vars must be non-negative")
        if sense not in ("min", "max"):
            raise ModelError(f"unknown sense {sense!r}")
        self.num_vars = int(num_vars)
        self.sense = sense
        self.objective = np.zeros(self.num_vars)
        self.objective_offset = 0.0
        self.lo = np.zeros(self.num_vars)
        self.hi = np.full(self.num_vars, BIG)
        self.integrality = np.zeros(self.num_vars, dtype=bool)
        self.constraints: List[Constraint] = []
        self.names: List[str] = [f"x{j}" for j in range(self.num_vars)]

    # -- building -----------------------------------------------------------
    def add_var(self, lo: float = 0.0, hi: float = BIG, integer: bool = False,
                obj: float = 0.0, name: Optional[str] = None) -> int:
        j = self.num_vars
        self.num_vars += 1
        self.objective = np.append(self.objective, obj)
        self.lo = np.append(self.lo, max(lo, -BIG))
        self.hi = np.append(self.hi, min(hi, BIG))
        self.integrality = np.append(self.integrality, bool(integer))
        self.names.append(name or f"x{j}")
        return j

    def add_vars(self, count: int, lo: float = 0.0, hi: float = BIG,
                 integer: bool = False, prefix: str = "x") -> List[int]:
        start = self.num_vars
        self.num_vars += count
        self.objective = np.concatenate([self.objective, np.zeros(count)])
        self.lo = np.concatenate([self.lo, np.full(count, max(lo, -BIG))])
        self.hi = np.concatenate([self.hi, np.full(count, min(hi, BIG))])
        self.integrality = np.concatenate([self.integrality, np.full(count, bool(integer))])
        self.names.extend(f"{prefix}{k}" for k in range(count))
        return list(range(start, start + count))

    def set_bounds(self, j: int, lo: float, hi: float) -> None:
        self.lo[j] = max(lo, -BIG)
        self.hi[j] = min(hi, BIG)

    def add_constraint(self, coeffs: Coeffs, rel: str, rhs: float) -> int:
        if rel not in _RELATIONS:
            raise ModelError(f"unknown relation {rel!r}")
        if isinstance(coeffs, Mapping):
            row = {int(k): float(v) for k, v in coeffs.items() if v != 0.0}
        else:
            arr = np.asarray(coeffs, dtype=float)
            if arr.shape != (self.num_vars,):
                raise ModelError(f"constraint row has length {arr.shape}, expected {self.num_vars}")
            row = {int(k): float(arr[k]) for k in np.flatnonzero(arr)}
        self.constraints.append(Constraint(row, _RELATIONS[rel], float(rhs)))
        return len(self.constraints) - 1

    # -- views --------------------------------------------------------------
    @property
    def var_bounds(self) -> List[Tuple[float, float]]:
        return list(zip(self.lo.tolist(), self.hi.tolist()))

    def row(self, i: int) -> np.ndarray:
        out = np.zeros(self.num_vars)
        for k, v in self.constraints[i].coeffs.items():
            out[k] = v
        return out

    def matrix(self) -> Tuple[np.ndarray, List[str], np.ndarray]:
        """Dense constraint matrix, relations and right-hand sides."""
        m = len(self.constraints)
        A = np.zeros((m, self.num_vars))
        rels = []
        b = np.empty(m)
        for i, con in enumerate(self.constraints):
            if con.coeffs:
                idx = np.fromiter(con.coeffs.keys(), dtype=np.intp, count=len(con.coeffs))
                A[i, idx] = np.fromiter(con.coeffs.values(), dtype=float, count=len(con.coeffs))
            rels.append(con.rel)
            b[i] = con.rhs
        return A, rels, b

    def validate(self) -> None:
        if self.objective.shape != (self.num_vars,):
            raise ModelError("objective length differs from num_vars")
        if np.any(self.lo > self.hi):
            bad = int(np.flatnonzero(self.lo > self.hi)[0])
            raise ModelError(f"variable {bad} has lo > hi ({self.lo[bad]} > {self.hi[bad]})")
        if np.any(self.lo < -BIG) or np.any(self.hi > BIG):
            raise ModelError("bounds must lie within [-1e9, 1e9]")
        for i, con in enumerate(self.constraints):
            for k in con.coeffs:
                if not 0 <= k < self.num_vars:
                    raise ModelError(f"constraint {i} references column {k} outside the model")

    def copy(self) -> "MilpModel":
        other = MilpModel(self.num_vars, self.sense)
        other.objective = self.objective.copy()
        other.objective_offset = self.objective_offset
        other.lo = self.lo.copy()
        other.hi = self.hi.copy()
        other.integrality = self.integrality.copy()
        other.constraints = [Constraint(dict(c.coeffs), c.rel, c.rhs) for c in self.constraints]
        other.names = list(self.names)
        return other

    # -- checking -----------------------------------------------------------
    def evaluate(self, values: np.ndarray) -> float:
        return float(self.objective @ values) + self.objective_offset

    def max_violation(self, values: np.ndarray, integrality: bool = True) -> float:
        """Largest scaled violation of bounds, rows and (optionally) integrality."""
        x = np.asarray(values, dtype=float)
        worst = max(0.0, float(np.max(self.lo - x, initial=0.0)),
                    float(np.max(x - self.hi, initial=0.0)))
        for con in self.constraints:
            lhs = sum(v * x[k] for k, v in con.coeffs.items())
            scale = 1.0 + abs(con.rhs)
            if con.rel == LE:
                viol = lhs - con.rhs
            elif con.rel == GE:
                viol = con.rhs - lhs
            else:
                viol = abs(lhs - con.rhs)
            worst = max(worst, viol / scale)
        if integrality and self.integrality.any():
            xi = x[self.integrality]
            worst = max(worst, float(np.max(np.abs(xi - np.round(xi)), initial=0.0)))
        return worst

    def is_feasible(self, values: np.ndarray, tol: float = FEAS_TOL) -> bool:
        return self.max_violation(values) <= tol


@dataclass
class MilpSolution:
    status: Status
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective_value: float = float("nan")
    node_count: int = 0
    wall_time: float = 0.0
    iterations: int = 0
    duals: Optional[np.ndarray] = None

    @property
    def ok(self) -> bool:
        return self.status.has_solution


def constraint_rows(model: MilpModel) -> Iterable[Tuple[np.ndarray, str, float]]:
    for i, con in enumerate(model.constraints):
        yield model.row(i), con.rel, con.rhs
