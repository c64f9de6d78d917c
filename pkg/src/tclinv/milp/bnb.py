"""Best-bound branch and bound over LP relaxations."""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .model import (INT_TOL, BudgetExhausted, MilpModel, MilpSolution, Status)
from .simplex import solve_lp


@dataclass(frozen=True)
class Budget:
    max_nodes: int = 50_000
    max_seconds: float = 10.0


def _most_fractional(values: np.ndarray, integrality: np.ndarray) -> int:
    """Index of the integer variable farthest from integrality; -1 if none."""
    idx = np.flatnonzero(integrality)
    if idx.size == 0:
        return -1
    v = values[idx]
    frac = np.abs(v - np.round(v))
    k = int(np.argmax(frac))  # argmax returns the lowest index among ties
    if frac[k] <= INT_TOL:
        return -1
    return int(idx[k])


def _snap(values: np.ndarray, integrality: np.ndarray) -> np.ndarray:
    out = values.copy()
    out[integrality] = np.round(out[integrality])
    return out


def solve_milp(model: MilpModel, budget: Budget = Budget(), incumbent: Optional[np.ndarray] = None,
               kernel: Optional[str] = None) -> MilpSolution:
    """Solve ``model`` by branch and bound.

    Node selection is best-bound (ties by creation order); branching picks the
    most fractional integer variable, lowest index first. ``incumbent`` is an
    optional feasible point used as the starting upper bound; it is ignored if
    it fails the feasibility check.

    Returns ``Optimal`` when the tree is exhausted with an incumbent,
    ``Infeasible`` when exhausted without one, ``TimeLimit-Suboptimal`` when
    the budget is hit holding an incumbent and ``BudgetExhausted-NoIncumbent``
    otherwise.
    """
    start = time.perf_counter()
    model.validate()
    dense = model.matrix()
    sign = -1.0 if model.sense == "max" else 1.0
    integ = model.integrality

    best_x: Optional[np.ndarray] = None
    best_obj = math.inf  # internal minimisation value
    if incumbent is not None:
        cand = _snap(np.asarray(incumbent, dtype=float), integ)
        if cand.shape == (model.num_vars,) and model.is_feasible(cand):
            best_x = cand
            best_obj = sign * model.evaluate(cand)

    # integer bounds can be tightened to integers right away
    lo0 = model.lo.copy()
    hi0 = model.hi.copy()
    lo0[integ] = np.ceil(lo0[integ] - INT_TOL)
    hi0[integ] = np.floor(hi0[integ] + INT_TOL)

    heap: list = []
    counter = 0
    heapq.heappush(heap, (-math.inf, counter, lo0, hi0))
    nodes = 0
    iterations = 0
    gap_tol = 1e-9

    def result(status: Status) -> MilpSolution:
        if best_x is None:
            return MilpSolution(status, node_count=nodes, iterations=iterations,
                                wall_time=time.perf_counter() - start)
        return MilpSolution(status, values=best_x, objective_value=model.evaluate(best_x),
                            node_count=nodes, iterations=iterations,
                            wall_time=time.perf_counter() - start)

    while heap:
        bound, _, lo, hi = heapq.heappop(heap)
        if bound >= best_obj - gap_tol * (1.0 + abs(best_obj)):
            # best-bound order: every remaining node is dominated too
            heap.clear()
            break
        if nodes >= budget.max_nodes or time.perf_counter() - start > budget.max_seconds:
            return result(Status.TIME_LIMIT_SUBOPTIMAL if best_x is not None
                          else Status.BUDGET_EXHAUSTED)
        nodes += 1
        lp = solve_lp(model, lo=lo, hi=hi, kernel=kernel, dense=dense)
        iterations += lp.iterations
        if lp.status == Status.INFEASIBLE:
            continue
        if lp.status == Status.UNBOUNDED:
            if nodes == 1 and best_x is None:
                return MilpSolution(Status.UNBOUNDED, node_count=nodes, iterations=iterations,
                                    wall_time=time.perf_counter() - start)
            continue
        node_obj = sign * (lp.objective_value)
        if node_obj >= best_obj - gap_tol * (1.0 + abs(best_obj)):
            continue
        j = _most_fractional(lp.values, integ)
        if j < 0:
            cand = _snap(lp.values, integ)
            if model.is_feasible(cand):
                best_x = cand
                best_obj = sign * model.evaluate(cand)
                continue
            # snapping broke a row: fall back to the raw LP point if it is feasible
            if model.max_violation(lp.values, integrality=False) <= 1e-6:
                best_x = lp.values.copy()
                best_obj = node_obj
            continue
        v = lp.values[j]
        down_hi = hi.copy()
        down_hi[j] = math.floor(v)
        up_lo = lo.copy()
        up_lo[j] = math.ceil(v)
        counter += 1
        heapq.heappush(heap, (node_obj, counter, lo, down_hi))
        counter += 1
        heapq.heappush(heap, (node_obj, counter, up_lo, hi))

    return result(Status.OPTIMAL if best_x is not None else Status.INFEASIBLE)


def check_feasible(model: MilpModel, budget: Budget = Budget(),
                   kernel: Optional[str] = None) -> Tuple[bool, Optional[np.ndarray]]:
    """Feasibility of ``model`` with its objective ignored.

    Returns ``(True, witness)`` or ``(False, None)``; raises
    :class:`BudgetExhausted` when the budget runs out before either is known.
    """
    probe = model.copy()
    probe.objective = np.zeros(probe.num_vars)
    probe.objective_offset = 0.0
    # any feasible leaf is optimal for a zero objective
    sol = solve_milp(probe, budget=budget, kernel=kernel)
    if sol.status == Status.BUDGET_EXHAUSTED:
        raise BudgetExhausted(f"no feasible point found within {sol.node_count} nodes")
    if sol.status.has_solution:
        return True, sol.values
    return False, None
