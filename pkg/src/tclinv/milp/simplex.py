"""Two-phase bounded-variable primal simplex on a dense tableau.

Every row becomes an equality by adding a slack column (``s >= 0`` for
``<=`` rows, ``s <= 0`` for ``>=`` rows). Rows whose slack cannot absorb the
initial residual get an artificial column; phase 1 drives the artificials to
zero. Bland's rule takes over after ``BLAND_AFTER`` consecutive degenerate
pivots.
"""

from __future__ import annotations

import time
from typing import Optional

import numpy as np

from . import kernels
from .model import BIG, EQ, GE, LE, OPT_TOL, MilpModel, MilpSolution, NumericalError, Status

BLAND_AFTER = 50
PHASE1_TOL = 1e-7
REFACTOR_TOL = 1e-9


class _Tableau:
    """Standard-form data and simplex state for one LP solve."""

    def __init__(self, A, rels, b, lo, hi):
        m, n = A.shape
        self.m, self.n = m, n
        slack_rows = [i for i, r in enumerate(rels) if r != EQ]
        ns = len(slack_rows)

        lo_all = np.concatenate([lo, np.empty(ns)])
        hi_all = np.concatenate([hi, np.empty(ns)])
        for s, i in enumerate(slack_rows):
            if rels[i] == LE:
                lo_all[n + s], hi_all[n + s] = 0.0, BIG
            else:
                lo_all[n + s], hi_all[n + s] = -BIG, 0.0

        # initial nonbasic values: a finite bound, else zero for free columns
        x = np.where(lo_all > -BIG, lo_all, np.where(hi_all < BIG, hi_all, 0.0))
        resid = b - A @ x[:n]

        slack_of_row = np.full(m, -1, dtype=np.intp)
        for s, i in enumerate(slack_rows):
            slack_of_row[i] = n + s

        basis = np.empty(m, dtype=np.intp)
        diag = np.ones(m)
        art_rows = []
        for i in range(m):
            s = slack_of_row[i]
            if s >= 0 and lo_all[s] <= resid[i] <= hi_all[s]:
                basis[i] = s
            else:
                art_rows.append(i)
        na = len(art_rows)
        ntot = n + ns + na
        T = np.zeros((m, ntot))
        T[:, :n] = A
        for s, i in enumerate(slack_rows):
            T[i, n + s] = 1.0
        lo_all = np.concatenate([lo_all, np.zeros(na)])
        hi_all = np.concatenate([hi_all, np.full(na, BIG)])
        x = np.concatenate([x, np.zeros(na)])
        for a, i in enumerate(art_rows):
            col = n + ns + a
            sign = 1.0 if resid[i] >= 0 else -1.0
            T[i, col] = sign
            diag[i] = sign
            basis[i] = col
        self.A_full = T.copy()  # original standard-form columns
        T /= diag[:, None]
        beta = np.empty(m)
        for i in range(m):
            if basis[i] >= n + ns:
                beta[i] = abs(resid[i])
            else:
                beta[i] = resid[i]

        self.b = b
        self.T = np.ascontiguousarray(T)
        self.beta = beta
        self.x = x
        self.lo = lo_all
        self.hi = hi_all
        self.basis = basis
        self.pos = np.full(ntot, -1, dtype=np.intp)
        self.pos[basis] = np.arange(m)
        self.n_struct = n
        self.n_slack = ns
        self.art_start = n + ns
        self.ntot = ntot

    def reduced_costs(self, c):
        return c - c[self.basis] @ self.T

    def values(self):
        v = self.x.copy()
        v[self.basis] = self.beta
        return v

    def refactor(self):
        """Recompute basic values from the original data when drift is visible."""
        v = self.values()
        resid = self.A_full @ v - self.b
        if self.m == 0 or np.max(np.abs(resid)) <= REFACTOR_TOL * (1.0 + np.max(np.abs(self.b), initial=0.0)):
            return
        B = self.A_full[:, self.basis]
        nonbasic = self.pos < 0
        rhs = self.b - self.A_full[:, nonbasic] @ self.x[nonbasic]
        try:
            self.beta = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError:
            pass

    def duals(self, c):
        B = self.A_full[:, self.basis]
        try:
            return np.linalg.solve(B.T, c[self.basis])
        except np.linalg.LinAlgError:
            return None


def _run(tab, c, allowed, run, max_iter):
    d = tab.reduced_costs(c)
    status, it = run(tab.T, tab.beta, tab.x, tab.lo, tab.hi, d, tab.basis, tab.pos,
                     allowed, max_iter, BLAND_AFTER)
    return status, it, d


def _drive_out_artificials(tab, pivot):
    d_dummy = np.zeros(tab.ntot)
    for r in range(tab.m):
        if tab.basis[r] < tab.art_start:
            continue
        row = tab.T[r, :tab.art_start]
        cand = np.flatnonzero((np.abs(row) > 1e-9) & (tab.pos[:tab.art_start] < 0))
        if cand.size == 0:
            continue  # redundant row; artificial stays basic at zero
        j = int(cand[np.argmax(np.abs(row[cand]))])
        leaving = tab.basis[r]
        pivot(tab.T, d_dummy, r, j)
        tab.x[leaving] = 0.0
        tab.beta[r] = tab.x[j]
        tab.basis[r] = j
        tab.pos[j] = r
        tab.pos[leaving] = -1


def solve_lp(model: MilpModel, lo: Optional[np.ndarray] = None, hi: Optional[np.ndarray] = None,
             kernel: Optional[str] = None, max_iter: int = 50_000,
             with_duals: bool = False, dense=None) -> MilpSolution:
    """Solve the LP relaxation of ``model`` (integrality ignored).

    ``lo``/``hi`` override the model's variable bounds (used by branch and
    bound). ``dense`` is a precomputed ``model.matrix()`` for repeated
    solves of an unchanged, already validated model. Raises
    :class:`NumericalError` when the pivoting breaks down.
    """
    start = time.perf_counter()
    if dense is None:
        model.validate()
    run, pivot = kernels.get_kernel(kernel)
    lo = model.lo if lo is None else lo
    hi = model.hi if hi is None else hi
    n = model.num_vars
    if np.any(lo > hi + 1e-12):
        return MilpSolution(Status.INFEASIBLE, wall_time=time.perf_counter() - start)
    A, rels, b = model.matrix() if dense is None else dense
    sign = -1.0 if model.sense == "max" else 1.0
    cost = sign * model.objective

    tab = _Tableau(A, rels, b, lo.astype(float), hi.astype(float))
    iterations = 0

    allowed = np.ones(tab.ntot, dtype=np.uint8)
    if tab.ntot > tab.art_start:
        c1 = np.zeros(tab.ntot)
        c1[tab.art_start:] = 1.0
        status, it, _ = _run(tab, c1, allowed, run, max_iter)
        iterations += it
        if status == kernels.ITERATION_LIMIT or status == kernels.NUMERICAL:
            raise NumericalError(f"phase 1 stalled after {it} pivots (status {status})")
        tab.refactor()
        infeas = float(np.sum(tab.values()[tab.art_start:]))
        if infeas > PHASE1_TOL * (1.0 + np.max(np.abs(b), initial=0.0)):
            return MilpSolution(Status.INFEASIBLE, iterations=iterations,
                                wall_time=time.perf_counter() - start)
        _drive_out_artificials(tab, pivot)
        allowed[tab.art_start:] = 0
        tab.hi[tab.art_start:] = 0.0
        tab.x[tab.art_start:] = 0.0

    c2 = np.zeros(tab.ntot)
    c2[:n] = cost
    status, it, d = _run(tab, c2, allowed, run, max_iter)
    iterations += it
    if status == kernels.UNBOUNDED:
        return MilpSolution(Status.UNBOUNDED, iterations=iterations,
                            wall_time=time.perf_counter() - start)
    if status != kernels.OPTIMAL:
        raise NumericalError(f"phase 2 stalled after {it} pivots (status {status})")
    tab.refactor()
    values = tab.values()[:n]
    # clean bound noise
    values = np.minimum(np.maximum(values, lo), hi)
    obj = float(model.objective @ values) + model.objective_offset
    duals = None
    if with_duals:
        y = tab.duals(c2)
        duals = None if y is None else sign * y
    return MilpSolution(Status.OPTIMAL, values=values, objective_value=obj,
                        iterations=iterations, wall_time=time.perf_counter() - start,
                        duals=duals)


def reduced_costs_ok(model: MilpModel, sol: MilpSolution, tol: float = OPT_TOL) -> bool:
    """Certificate check: no improving direction exists at ``sol`` given its duals."""
    if sol.duals is None:
        return False
    A, rels, _ = model.matrix()
    sign = -1.0 if model.sense == "max" else 1.0
    d = sign * model.objective - sign * (sol.duals @ A)
    x = sol.values
    scale = 1.0 + np.max(np.abs(model.objective), initial=0.0)
    y = sign * sol.duals
    for i, rel in enumerate(rels):
        if rel == LE and y[i] > tol * scale:
            return False
        if rel == GE and y[i] < -tol * scale:
            return False
    for j in range(model.num_vars):
        at_lo = x[j] <= model.lo[j] + 1e-9
        at_hi = x[j] >= model.hi[j] - 1e-9
        if d[j] < -tol * scale and not at_hi:
            return False
        if d[j] > tol * scale and not at_lo:
            return False
    return True
