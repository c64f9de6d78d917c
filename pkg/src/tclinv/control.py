"""Model predictive controllers over the aggregate count dynamics.

All four controllers share one MILP builder. Predicted states are affine in
the switch inputs, ``x^{tau+1} = A x^tau + B u^tau``, so the states are
eliminated and only inputs on the reachable support become variables. The
controllers differ in which constraint blocks are switched on:

============  =====================  ==========  ==============
kind          safety rows            terminal    reference
============  =====================  ==========  ==============
InvSetMpc     tau = 1 .. h-1         Omega       r
Benchmark1    tau = 0 .. h           none        r
Benchmark2    none                   none        clamp(r)
Benchmark3    tau = 1 .. h-1         Omega       r  (no lockout)
============  =====================  ==========  ==============

Benchmark3 uses the same code on artifacts built from lockout-free graphs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .abstraction import ON, AbstractionSpec, GroupDynamics
from .aggregate import (AggregateGraph, SafeSetSpec, build_graph, build_matrices,
                        check_admissible, is_safe_state, mode_counts)
from .invariant import (MAX_LEN, CycleAssignment, SafeCycle, add_omega_constraints,
                        decode_assignment, enumerate_safe_cycles, lift, lift_rows, membership,
                        select_cycles, shift_coefficients, shift_input)
from .milp import Budget, MilpModel, Status, solve_milp

INV_SET_MPC = "InvSetMpc"
BENCHMARK1 = "Benchmark1"
BENCHMARK2 = "Benchmark2"
BENCHMARK3 = "Benchmark3"
KINDS = (INV_SET_MPC, BENCHMARK1, BENCHMARK2, BENCHMARK3)

DEFAULT_BUDGET = Budget(max_nodes=50_000, max_seconds=10.0)


@dataclass
class ControllerConfig:
    """Settings shared by every controller kind.

    Attributes
    ----------
    kind : str
        One of :data:`KINDS`.
    horizon : int
        Prediction horizon ``h`` in steps.
    reference : array
        Reference power in kW per step; must cover the run plus the horizon.
    budget : Budget
        Branch-and-bound limits per step.
    weights : array, optional
        Cost weight of each predicted step ``0..h``; ones by default.
    switch_penalty : float
        Cost per switched subsystem, a small tie-breaker that favours
        leaving subsystems alone.
    """

    kind: str = INV_SET_MPC
    horizon: int = 2
    reference: np.ndarray = field(default_factory=lambda: np.zeros(0))
    budget: Budget = DEFAULT_BUDGET
    weights: Optional[np.ndarray] = None
    switch_penalty: float = 1e-3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown controller kind {self.kind!r}")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        self.reference = np.asarray(self.reference, dtype=float)
        if self.weights is None:
            self.weights = np.ones(self.horizon + 1)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.horizon + 1,) or np.any(self.weights < 0):
            raise ValueError("need h+1 non-negative cost weights")

    def reference_window(self, t: int) -> np.ndarray:
        if t + self.horizon >= self.reference.size:
            raise ValueError(f"reference has {self.reference.size} steps, "
                             f"step {t} needs {t + self.horizon + 1}")
        return self.reference[t:t + self.horizon + 1]


@dataclass
class ControlArtifacts:
    """Everything a controller needs about the aggregate system.

    ``power[i]`` is the electrical power of one on-mode subsystem of group
    ``i``; the tracking cost counts on-mode subsystems with these weights.
    """

    graphs: List[AggregateGraph]
    cycles: List[List[SafeCycle]]
    safe: SafeSetSpec
    power: np.ndarray
    matrices: List[Tuple[sp.csr_matrix, sp.csr_matrix]] = field(default_factory=list)

    def __post_init__(self):
        self.power = np.asarray(self.power, dtype=float)
        if not self.matrices:
            self.matrices = [build_matrices(G) for G in self.graphs]

    @property
    def dims(self) -> List[int]:
        return [G.D_x for G in self.graphs]

    @property
    def lockout_free(self) -> bool:
        return all(t == 0 for G in self.graphs for t in G.tau_bar)


def build_artifacts(groups: Sequence[GroupDynamics], specs: Sequence[AbstractionSpec],
                    P_lo: Sequence[float], P_hi: Sequence[float], n_cycles: Sequence[int],
                    max_len: int = MAX_LEN, lockout: bool = True) -> ControlArtifacts:
    """Graphs, cycles and safe set for a list of groups.

    With ``lockout=False`` the graphs ignore the lockout lengths, which is
    the aggregate system used by Benchmark3.
    """
    graphs, cycles = [], []
    for g, spec, n in zip(groups, specs, n_cycles):
        G = build_graph(spec, g, tau_bar=None if lockout else (0,) * g.mode_count)
        graphs.append(G)
        cycles.append(select_cycles(enumerate_safe_cycles(G, max_len=max_len), n, G.M))
    weights = np.array([g.mode_power for g in groups])
    safe = SafeSetSpec(graphs, P_lo=P_lo, P_hi=P_hi, weights=weights)
    return ControlArtifacts(graphs, cycles, safe, power=[g.power for g in groups])


# -- costs ---------------------------------------------------------------

def consumption(xs: Sequence[np.ndarray], graphs: Sequence[AggregateGraph],
                power: Sequence[float]) -> float:
    """Aggregate power ``sum_i p_i * (# on in group i)`` in kW."""
    return float(sum(p * mode_counts(G, x)[ON] for G, x, p in zip(graphs, xs, power)))


def tracking_cost(xs: Sequence[np.ndarray], r: float, graphs: Sequence[AggregateGraph],
                  power: Sequence[float]) -> float:
    """Absolute gap between aggregate power and the reference, in kW."""
    return abs(consumption(xs, graphs, power) - float(r))


def truncate_reference(r, P_lo: float, P_hi: float) -> np.ndarray:
    """Clamp the reference pointwise into ``[P_lo, P_hi]``."""
    if P_lo > P_hi:
        raise ValueError("P_lo must not exceed P_hi")
    return np.clip(np.asarray(r, dtype=float), P_lo, P_hi)


# -- program ---------------------------------------------------------------

@dataclass
class Plan:
    """Inputs over the horizon and, for terminal-set controllers, the
    terminal occupancy. ``inputs[tau][i]`` is the input of group ``i``."""

    inputs: List[List[np.ndarray]]
    terminal: Optional[CycleAssignment] = None

    def shifted(self, graphs: Sequence[AggregateGraph]) -> Optional["Plan"]:
        """The one-step shift fallback: drop the first input and append the
        circular shift of the terminal assignment."""
        if self.terminal is None:
            return None
        ca = self.terminal
        last = [shift_input(G, cs, bs) for G, cs, bs in zip(graphs, ca.cycles, ca.betas)]
        return Plan(self.inputs[1:] + [last], ca.shifted(1))

    def held(self, graphs: Sequence[AggregateGraph]) -> "Plan":
        """Drop the first input and append a step without switches; the
        warm start of controllers that have no terminal set."""
        idle = [np.zeros(G.D_u, dtype=np.int64) for G in graphs]
        return Plan(self.inputs[1:] + [idle], None)


@dataclass
class StepResult:
    """Outcome of one controller step.

    ``inputs`` is ``u(t)`` per group, ``predicted[tau][i]`` the predicted
    state of group ``i`` after ``tau`` steps and ``costs[tau]`` the tracking
    cost of that state. ``objective`` is the weighted tracking cost without
    the switch tie-breaker.
    """

    status: Status
    inputs: Optional[List[np.ndarray]] = None
    predicted: Optional[List[List[np.ndarray]]] = None
    objective: float = float("nan")
    costs: Optional[np.ndarray] = None
    plan: Optional[Plan] = None
    solve_time: float = 0.0
    nodes: int = 0
    used_fallback: bool = False

    @property
    def feasible(self) -> bool:
        return self.status.has_solution


class _GroupBlock:
    """Reachable support and affine state maps of one group.

    ``const[tau]`` and ``coef[tau]`` give ``x^tau = const + coef @ v`` where
    ``v`` are this group's input variables; ``var_of[tau]`` maps input
    indices at step ``tau`` to local variable numbers.
    """

    def __init__(self, G: AggregateGraph, A, B, x0: np.ndarray, h: int):
        self.G = G
        x0 = np.asarray(x0, dtype=float)
        support = set(np.flatnonzero(x0).tolist())
        self.var_of: List[Dict[int, int]] = []
        self.src_of: List[int] = []      # source node of each local variable
        self.supports: List[List[int]] = []
        unlocked = G.unlocked_nodes
        n_local = 0
        for tau in range(h):
            sup = sorted(support)
            self.supports.append(sup)
            vmap: Dict[int, int] = {}
            nxt = set()
            for n in sup:
                nxt.add(G.autonomous_target(n))
                if not unlocked[n]:
                    continue
                m1, _, k = G.label(n)
                for m2 in range(G.M):
                    if m2 == m1:
                        continue
                    vmap[G.input_index(m1, m2, k)] = n_local
                    self.src_of.append(n)
                    n_local += 1
                    nxt.add(G.switch_target(m1, m2, k))
            self.var_of.append(vmap)
            support = nxt
        self.supports.append(sorted(support))
        self.n_local = n_local

        self.const = [x0]
        self.coef = [sp.csr_matrix((G.D_x, n_local))]
        for tau in range(h):
            vmap = self.var_of[tau]
            sel = sp.csr_matrix((np.ones(len(vmap)), (list(vmap.keys()), list(vmap.values()))),
                                shape=(G.D_u, n_local))
            self.const.append(A @ self.const[-1])
            self.coef.append((A @ self.coef[-1] + B @ sel).tocsr())

    def row(self, tau: int, n: int, offset: int) -> Tuple[Dict[int, float], float]:
        """Coefficients (model columns) and constant of ``x^tau[n]``."""
        c = self.coef[tau]
        lo, hi = c.indptr[n], c.indptr[n + 1]
        coeffs = {offset + int(j): float(v) for j, v in zip(c.indices[lo:hi], c.data[lo:hi])}
        return coeffs, float(self.const[tau][n])


def _add_expr(target: Dict[int, float], coeffs: Dict[int, float], scale: float = 1.0) -> None:
    for j, v in coeffs.items():
        target[j] = target.get(j, 0.0) + scale * v


class MpcProgram:
    """The MILP solved by one controller step, plus its variable layout."""

    def __init__(self, kind: str, xs: Sequence[np.ndarray], t: int, cfg: ControllerConfig,
                 art: ControlArtifacts):
        self.kind = kind
        self.cfg = cfg
        self.art = art
        h = cfg.horizon
        self.h = h
        s = art.safe
        self.xs = [np.asarray(x) for x in xs]
        self.pops = [int(x.sum()) for x in self.xs]
        ref = cfg.reference_window(t)
        if kind == BENCHMARK2:
            ref = truncate_reference(ref, s.P_lo[ON], s.P_hi[ON])
        self.ref = ref

        model = MilpModel(0)
        self.model = model
        self.blocks: List[_GroupBlock] = []
        self.offsets: List[int] = []
        for i, (G, (A, B), x) in enumerate(zip(art.graphs, art.matrices, self.xs)):
            blk = _GroupBlock(G, A, B, x, h)
            off = model.num_vars
            if blk.n_local:
                model.add_vars(blk.n_local, lo=0.0, hi=float(self.pops[i]), integer=True,
                               prefix=f"u{i}_")
            model.objective[off:off + blk.n_local] = cfg.switch_penalty
            self.blocks.append(blk)
            self.offsets.append(off)

        self._admissibility()
        if kind == BENCHMARK1:
            safe_steps = range(0, h + 1)
        elif kind == BENCHMARK2:
            safe_steps = range(0)
        else:
            safe_steps = range(1, h)
        self.infeasible_reason = ""
        for tau in safe_steps:
            self._safety(tau)
        self.encoding = None
        self.hcols: List[Tuple[int, int, int, int, int]] = []
        if kind in (INV_SET_MPC, BENCHMARK3):
            self._terminal()
        self._cost()

    # -- blocks --------------------------------------------------------
    def _admissibility(self) -> None:
        model = self.model
        for blk, off in zip(self.blocks, self.offsets):
            for tau in range(self.h):
                by_src: Dict[int, List[int]] = {}
                for j in blk.var_of[tau].values():
                    by_src.setdefault(blk.src_of[j], []).append(off + j)
                for n, cols in by_src.items():
                    if tau == 0:
                        cap = float(blk.const[0][n])
                        if len(cols) == 1:
                            model.set_bounds(cols[0], 0.0, cap)
                            continue
                        model.add_constraint({c: 1.0 for c in cols}, "<=", cap)
                        continue
                    coeffs, const = blk.row(tau, n, off)
                    row = {c: 1.0 for c in cols}
                    _add_expr(row, coeffs, -1.0)
                    model.add_constraint(row, "<=", const)

    def _power_expr(self, tau: int, m: int, weights: np.ndarray) -> Tuple[Dict[int, float], float]:
        """Weighted count of mode ``m`` at step ``tau`` as an affine expression."""
        expr: Dict[int, float] = {}
        const = 0.0
        for i, (blk, off) in enumerate(zip(self.blocks, self.offsets)):
            w = weights[i]
            if w == 0.0:
                continue
            modes = blk.G.node_mode
            for n in blk.supports[tau]:
                if modes[n] != m:
                    continue
                coeffs, c = blk.row(tau, n, off)
                _add_expr(expr, coeffs, w)
                const += w * c
        return expr, const

    def _safety(self, tau: int) -> None:
        model = self.model
        s = self.art.safe
        for blk, off in zip(self.blocks, self.offsets):
            safe = blk.G.safe_nodes
            for n in blk.supports[tau]:
                if safe[n]:
                    continue
                coeffs, const = blk.row(tau, n, off)
                model.add_constraint(coeffs, "==", -const)
        for m in range(s.M):
            w = s.weights[:, m]
            top = float(w @ self.pops)
            expr, const = self._power_expr(tau, m, w)
            if s.P_lo[m] > 0:
                model.add_constraint(expr, ">=", s.P_lo[m] - const)
            if s.P_hi[m] < top:
                model.add_constraint(expr, "<=", s.P_hi[m] - const)

    def _terminal(self) -> None:
        model = self.model
        art = self.art
        h = self.h
        enc = add_omega_constraints(model, art.cycles, art.safe, self.pops)
        self.encoding = enc
        for i, (blk, off, cs) in enumerate(zip(self.blocks, self.offsets, art.cycles)):
            rows = lift_rows(cs, enc.beta_cols[i], blk.G.D_x)
            reach = set(blk.supports[h])
            for n in sorted(set(rows) | reach):
                coeffs, const = blk.row(h, n, off) if n in reach else ({}, 0.0)
                if n not in reach:
                    # no subsystem can be here after h steps
                    for col in rows[n]:
                        model.set_bounds(col, 0.0, 0.0)
                    continue
                row = dict(coeffs)
                _add_expr(row, rows.get(n, {}), -1.0)
                model.add_constraint(row, "==", -const)

    def _cost(self) -> None:
        model = self.model
        art = self.art
        w = self.cfg.weights
        p = art.power
        x0_power = consumption(self.xs, art.graphs, p)
        model.objective_offset = w[0] * abs(x0_power - self.ref[0])
        self.cost_cols = []
        for tau in range(1, self.h + 1):
            expr, const = self._power_expr(tau, ON, p)
            e = model.add_var(lo=0.0, obj=float(w[tau]), name=f"e{tau}")
            self.cost_cols.append(e)
            gap = self.ref[tau] - const
            model.add_constraint({**expr, e: -1.0}, "<=", gap)
            neg = {j: -v for j, v in expr.items()}
            model.add_constraint({**neg, e: -1.0}, "<=", -gap)

    # -- encode / decode -------------------------------------------------
    def decode(self, values: np.ndarray) -> Plan:
        inputs = []
        for tau in range(self.h):
            step = []
            for blk, off in zip(self.blocks, self.offsets):
                u = np.zeros(blk.G.D_u, dtype=np.int64)
                for c, j in blk.var_of[tau].items():
                    u[c] = int(round(values[off + j]))
                step.append(u)
            inputs.append(step)
        terminal = None
        if self.encoding is not None:
            terminal = decode_assignment(values, self.encoding, self.art.cycles, self.art.dims)
        return Plan(inputs, terminal)

    def encode(self, plan: Plan) -> Optional[np.ndarray]:
        """Full variable vector for ``plan``, or None when it does not fit
        the variable layout (an input outside the reachable support)."""
        model = self.model
        v = np.zeros(model.num_vars)
        for tau in range(self.h):
            for blk, off, u in zip(self.blocks, self.offsets, plan.inputs[tau]):
                for c in np.flatnonzero(u):
                    j = blk.var_of[tau].get(int(c))
                    if j is None:
                        return None
                    v[off + j] = u[c]
        if self.encoding is not None:
            if plan.terminal is None:
                return None
            for bs, cols in zip(plan.terminal.betas, self.encoding.beta_cols):
                for b, col in zip(bs, cols):
                    v[np.asarray(col)] = b
            for name_idx, name in enumerate(model.names):
                if not name.startswith(("hlo_", "hhi_")):
                    continue
                _, m, i, j = name.split("_")
                m, i, j = int(m), int(i), int(j)
                R = shift_coefficients(self.art.cycles[i][j], m)
                vals = R @ plan.terminal.betas[i][j]
                v[name_idx] = vals.min() if name.startswith("hlo_") else vals.max()
        # cost epigraph values follow from the predicted states
        xs = self.predict(v)
        for tau, col in zip(range(1, self.h + 1), self.cost_cols):
            v[col] = abs(consumption(xs[tau], self.art.graphs, self.art.power) - self.ref[tau])
        return v

    def predict(self, values: np.ndarray) -> List[List[np.ndarray]]:
        out = []
        for tau in range(self.h + 1):
            step = []
            for blk, off in zip(self.blocks, self.offsets):
                x = blk.const[tau] + blk.coef[tau] @ values[off:off + blk.n_local]
                step.append(np.rint(x).astype(np.int64))
            out.append(step)
        return out


# -- step ----------------------------------------------------------------

def _step_costs(prog: MpcProgram, predicted) -> np.ndarray:
    art = prog.art
    return np.array([abs(consumption(x, art.graphs, art.power) - r)
                     for x, r in zip(predicted, prog.ref)])


def mpc_step(kind: str, xs: Sequence[np.ndarray], t: int, cfg: ControllerConfig,
             art: ControlArtifacts, warm: Optional[Plan] = None) -> StepResult:
    """Solve one controller step from aggregate state ``xs`` at time ``t``.

    ``warm`` is a candidate plan (usually the shifted previous solution);
    if it is feasible it seeds branch and bound, and it is returned when
    the budget runs out before anything better is found.
    """
    start = time.perf_counter()
    if kind == BENCHMARK1:
        ok, _ = is_safe_state(xs, art.safe)
        if not ok:
            return StepResult(Status.INFEASIBLE, solve_time=time.perf_counter() - start)
    prog = MpcProgram(kind, xs, t, cfg, art)
    incumbent = prog.encode(warm) if warm is not None else None
    if incumbent is not None and not prog.model.is_feasible(incumbent):
        incumbent = None
    sol = solve_milp(prog.model, budget=cfg.budget, incumbent=incumbent)
    elapsed = time.perf_counter() - start
    if not sol.status.has_solution:
        return StepResult(sol.status, solve_time=elapsed, nodes=sol.node_count)
    plan = prog.decode(sol.values)
    predicted = prog.predict(sol.values)
    costs = _step_costs(prog, predicted)
    for G, x, u in zip(art.graphs, xs, plan.inputs[0]):
        check_admissible(G, x, u)
    used_fallback = incumbent is not None and np.allclose(sol.values, incumbent)
    return StepResult(sol.status, inputs=plan.inputs[0], predicted=predicted,
                      objective=float(cfg.weights @ costs), costs=costs, plan=plan,
                      solve_time=elapsed, nodes=sol.node_count, used_fallback=used_fallback)


class Controller:
    """Stateful wrapper that carries the shift fallback between steps."""

    def __init__(self, cfg: ControllerConfig, art: ControlArtifacts):
        self.cfg = cfg
        self.art = art
        self.plan: Optional[Plan] = None

    @property
    def uses_terminal_set(self) -> bool:
        return self.cfg.kind in (INV_SET_MPC, BENCHMARK3)

    def initial_plan(self, xs: Sequence[np.ndarray],
                     witness: Optional[CycleAssignment] = None) -> Optional[Plan]:
        """Plan that keeps circulating a membership witness of ``xs``."""
        if not self.uses_terminal_set:
            return None
        if witness is None:
            ok, witness, _ = membership(xs, self.art.cycles, self.art.safe, self.cfg.budget)
            if not ok:
                return None
        inputs, ca = [], witness
        for _ in range(self.cfg.horizon):
            inputs.append([shift_input(G, cs, bs)
                           for G, cs, bs in zip(self.art.graphs, ca.cycles, ca.betas)])
            ca = ca.shifted(1)
        return Plan(inputs, ca)

    def step(self, t: int, xs: Sequence[np.ndarray],
             witness: Optional[CycleAssignment] = None) -> StepResult:
        warm = None
        if self.uses_terminal_set:
            if self.plan is not None:
                warm = self.plan.shifted(self.art.graphs)
            else:
                warm = self.initial_plan(xs, witness)
        elif self.plan is not None:
            warm = self.plan.held(self.art.graphs)
        else:
            idle = [np.zeros(G.D_u, dtype=np.int64) for G in self.art.graphs]
            warm = Plan([idle] * self.cfg.horizon)
        res = mpc_step(self.cfg.kind, xs, t, self.cfg, self.art, warm=warm)
        self.plan = res.plan
        return res
