"""Safe cycles and the implicit controlled invariant set they generate.

A safe cycle is a closed walk through safe nodes of a group graph. Subsystems
placed on a cycle and moved one position per step (the circular shift) never
leave the safe nodes; the occupancy vector ``beta`` of a cycle rotates by
one position per step. The set ``Omega`` collects occupancy vectors whose
per-mode counts stay within the power bounds for every rotation, and its
image under the lift ``Phi`` is the invariant set of aggregate states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .aggregate import (AggregateGraph, SafeSetSpec, Violation, build_matrices, check_admissible,
                        is_safe_state)
from .milp import Budget, MilpModel, Status, solve_milp

MAX_LEN = 12
MAX_COUNT = 64


class NoSafeCycleError(RuntimeError):
    """A group graph has no cycle through safe nodes."""


@dataclass(frozen=True)
class SafeCycle:
    """Closed walk ``nodes[0] -> nodes[1] -> ... -> nodes[0]``.

    ``modes[l]`` is the mode of ``nodes[l]``, which is also the mode applied
    on the edge entering ``nodes[l]``.
    """

    gid: int
    nodes: Tuple[int, ...]
    modes: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def length(self) -> int:
        return len(self.nodes)

    def mode_profile(self, M: int = 2) -> Tuple[int, ...]:
        """Number of positions in each mode."""
        return tuple(int(c) for c in np.bincount(self.modes, minlength=M))

    def to_dict(self) -> dict:
        return {"gid": self.gid, "nodes": list(self.nodes), "modes": list(self.modes)}

    @classmethod
    def from_dict(cls, d: dict) -> "SafeCycle":
        return cls(int(d["gid"]), tuple(int(n) for n in d["nodes"]),
                   tuple(int(m) for m in d["modes"]))


def cycle_is_valid(G: AggregateGraph, c: SafeCycle) -> bool:
    """Every step is a graph edge, every node is safe, modes match nodes."""
    edges = set(map(tuple, G.edges[:, :2].tolist()))
    safe = G.safe_nodes
    n = len(c)
    for l in range(n):
        a, b = c.nodes[l], c.nodes[(l + 1) % n]
        if (a, b) not in edges or not safe[a] or G.node_mode[a] != c.modes[l]:
            return False
    return True


def _successor_lists(G: AggregateGraph) -> List[List[int]]:
    safe = G.safe_nodes
    out: List[List[int]] = [[] for _ in range(G.D_x)]
    for s, d, _ in G.edges:
        if safe[s] and safe[d]:
            out[int(s)].append(int(d))
    for lst in out:
        lst.sort()
    return out


def _cycles_of_length(adj: List[List[int]], starts: Sequence[int], length: int) -> List[Tuple[int, ...]]:
    """Simple cycles of exactly ``length`` nodes whose smallest node comes first."""
    found = []
    for s in starts:
        path = [s]
        on_path = {s}
        # iterative DFS over (node, next-child position)
        stack = [0]
        while stack:
            depth = len(path)
            node = path[-1]
            i = stack[-1]
            nbrs = adj[node]
            if i >= len(nbrs):
                stack.pop()
                on_path.discard(path.pop())
                continue
            stack[-1] = i + 1
            nxt = nbrs[i]
            if nxt == s:
                if depth == length:
                    found.append(tuple(path))
                continue
            if nxt < s or nxt in on_path or depth >= length:
                continue
            path.append(nxt)
            on_path.add(nxt)
            stack.append(0)
    return found


def enumerate_safe_cycles(G: AggregateGraph, max_len: int = MAX_LEN,
                          max_count: int = MAX_COUNT) -> List[SafeCycle]:
    """Simple cycles through safe nodes, shortest first, then lexicographic.

    Each cycle is reported once, rotated so that its smallest node index
    comes first. The search deepens one length at a time and stops at the
    first length that brings the total to ``max_count``.

    Raises
    ------
    NoSafeCycleError
        If no safe cycle of at most ``max_len`` nodes exists.
    """
    adj = _successor_lists(G)
    starts = [n for n in range(G.D_x) if adj[n]]
    modes = G.node_mode
    out: List[SafeCycle] = []
    for length in range(1, max_len + 1):
        cyc = sorted(_cycles_of_length(adj, starts, length))
        out.extend(SafeCycle(G.gid, c, tuple(int(modes[n]) for n in c)) for c in cyc)
        if len(out) >= max_count:
            break
    if not out:
        raise NoSafeCycleError(f"group {G.gid}: no safe cycle with at most {max_len} nodes")
    return out[:max_count]


def select_cycles(cycles: Sequence[SafeCycle], n: int, M: int = 2) -> List[SafeCycle]:
    """Pick ``n`` cycles favouring distinct mode profiles.

    Candidates keep their enumeration order (shortest, then lexicographic).
    The first pass takes one cycle per distinct mode profile, i.e. per
    distinct on/off count pair; later passes fill up with the remaining
    cycles in order.
    """
    chosen: List[SafeCycle] = []
    seen = set()
    for c in cycles:
        prof = c.mode_profile(M)
        if prof not in seen:
            seen.add(prof)
            chosen.append(c)
        if len(chosen) == n:
            return chosen
    for c in cycles:
        if c not in chosen:
            chosen.append(c)
            if len(chosen) == n:
                break
    return chosen


# -- circulant algebra ---------------------------------------------------

def shift(beta: np.ndarray, q: int = 1) -> np.ndarray:
    """``Psi^q beta``: entry ``l`` moves to position ``l + q`` (mod length)."""
    if q < 0:
        raise ValueError("shift count must be non-negative")
    return np.roll(np.asarray(beta), q)


def mode_count(c: SafeCycle, beta: np.ndarray, m: int, q: int = 0) -> int:
    """Number of subsystems of cycle ``c`` in mode ``m`` after ``q`` shifts."""
    beta = np.asarray(beta)
    if beta.shape != (len(c),):
        raise ValueError("beta length must equal the cycle length")
    mask = np.asarray(c.modes) == m
    return shift(beta, q)[mask].sum()


def mode_count_table(c: SafeCycle, beta: np.ndarray, M: int = 2) -> np.ndarray:
    """``H[q, m]`` for all shifts ``q`` in one period."""
    beta = np.asarray(beta, dtype=float)
    l = len(c)
    onehot = np.zeros((l, M))
    onehot[np.arange(l), c.modes] = 1.0
    shifts = np.stack([np.roll(beta, q) for q in range(l)])
    return shifts @ onehot


def shift_coefficients(c: SafeCycle, m: int) -> np.ndarray:
    """Rows ``R[q]`` with ``R[q] @ beta = H_{m,q}(beta)``."""
    l = len(c)
    mask = (np.asarray(c.modes) == m).astype(float)
    # (Psi^q beta)_p = beta_{p - q}, so H = sum_p mask_p beta_{p-q}
    return np.stack([np.roll(mask, -q) for q in range(l)])


# -- assignments ---------------------------------------------------------

@dataclass
class CycleAssignment:
    """Selected cycles and their occupancy vectors, per group.

    Attributes
    ----------
    cycles : list of list of SafeCycle
        ``cycles[i][j]`` is cycle ``j`` of group ``i``.
    betas : list of list of int arrays
        Occupancy vectors matching ``cycles``.
    dims : list of int
        Aggregate state dimension of each group (for the lift).
    """

    cycles: List[List[SafeCycle]]
    betas: List[List[np.ndarray]]
    dims: List[int]

    def __post_init__(self):
        self.betas = [[np.asarray(b, dtype=np.int64) for b in grp] for grp in self.betas]
        for cs, bs in zip(self.cycles, self.betas):
            if len(cs) != len(bs) or any(len(c) != len(b) for c, b in zip(cs, bs)):
                raise ValueError("betas must match the cycle structure")
            if any(np.any(b < 0) for b in bs):
                raise ValueError("occupancy counts must be non-negative")

    @property
    def total_length(self) -> int:
        return sum(len(c) for cs in self.cycles for c in cs)

    @property
    def populations(self) -> List[int]:
        return [int(sum(b.sum() for b in bs)) for bs in self.betas]

    def shifted(self, q: int = 1) -> "CycleAssignment":
        return CycleAssignment(self.cycles, [[shift(b, q) for b in bs] for bs in self.betas],
                               self.dims)

    def period(self) -> int:
        lens = [len(c) for cs in self.cycles for c in cs]
        return reduce(lambda a, b: a * b // math.gcd(a, b), lens, 1)

    def to_dict(self) -> dict:
        return {"dims": list(self.dims),
                "cycles": [[c.to_dict() for c in cs] for cs in self.cycles],
                "betas": [[b.tolist() for b in bs] for bs in self.betas]}

    @classmethod
    def from_dict(cls, d: dict) -> "CycleAssignment":
        return cls([[SafeCycle.from_dict(c) for c in cs] for cs in d["cycles"]],
                   [[np.asarray(b) for b in bs] for bs in d["betas"]], list(d["dims"]))


def zero_assignment(cycles: List[List[SafeCycle]], dims: List[int]) -> CycleAssignment:
    return CycleAssignment(cycles, [[np.zeros(len(c), dtype=np.int64) for c in cs]
                                    for cs in cycles], dims)


@dataclass
class OmegaReport:
    ok: bool
    low: np.ndarray    # weighted sum of per-cycle minima, per mode
    high: np.ndarray   # weighted sum of per-cycle maxima, per mode
    slack_low: np.ndarray
    slack_high: np.ndarray


def omega_check(ca: CycleAssignment, s: SafeSetSpec, tol: float = 1e-9) -> OmegaReport:
    """Check the min/max mode-count conditions that define ``Omega``.

    Population totals are not checked here; they are implied by the state
    the assignment is compared with.
    """
    M = s.M
    low = np.zeros(M)
    high = np.zeros(M)
    for i, (cs, bs) in enumerate(zip(ca.cycles, ca.betas)):
        for c, b in zip(cs, bs):
            H = mode_count_table(c, b, M)
            low += s.weights[i] * H.min(axis=0)
            high += s.weights[i] * H.max(axis=0)
    slack_low = low - s.P_lo
    slack_high = s.P_hi - high
    ok = bool(np.all(slack_low >= -tol) and np.all(slack_high >= -tol))
    return OmegaReport(ok, low, high, slack_low, slack_high)


def lift(ca: CycleAssignment) -> List[np.ndarray]:
    """Aggregate state of each group obtained from the occupancy vectors."""
    out = []
    for cs, bs, dim in zip(ca.cycles, ca.betas, ca.dims):
        x = np.zeros(dim, dtype=np.int64)
        for c, b in zip(cs, bs):
            np.add.at(x, np.asarray(c.nodes, dtype=np.int64), b)
        out.append(x)
    return out


def shift_input(G: AggregateGraph, cycles: Sequence[SafeCycle],
                betas: Sequence[np.ndarray]) -> np.ndarray:
    """Switch input that advances every cycle of one group by one position."""
    u = np.zeros(G.D_u, dtype=np.int64)
    for c, b in zip(cycles, betas):
        n = len(c)
        for l in range(n):
            if b[l] == 0:
                continue
            src, m_next = c.nodes[l], c.modes[(l + 1) % n]
            m, _, k = G.label(src)
            if m != m_next:
                u[G.input_index(m, m_next, k)] += b[l]
    return u


# -- membership ----------------------------------------------------------

@dataclass
class OmegaEncoding:
    """Column layout of the occupancy variables inside a MILP."""

    beta_cols: List[List[np.ndarray]]   # per group, per cycle: column indices


def add_omega_constraints(model: MilpModel, cycles: List[List[SafeCycle]], s: SafeSetSpec,
                          populations: Sequence[int]) -> OmegaEncoding:
    """Append occupancy variables and the ``Omega`` rows to ``model``.

    For every mode with a nonzero weight in a group, each cycle gets a pair
    ``hlo <= H_{m,q}(beta) <= hhi`` over all shifts ``q``; the weighted sums
    of ``hlo`` and ``hhi`` are bounded by ``P_lo`` and ``P_hi``. The pair is
    continuous: with non-negative weights the bound rows push ``hlo`` up and
    ``hhi`` down, so the relaxation of the min/max is exact.
    """
    beta_cols: List[List[np.ndarray]] = []
    lo_terms: Dict[int, Dict[int, float]] = {m: {} for m in range(s.M)}
    hi_terms: Dict[int, Dict[int, float]] = {m: {} for m in range(s.M)}
    for i, cs in enumerate(cycles):
        N = populations[i]
        cols_i = []
        for c in cs:
            cols = model.add_vars(len(c), lo=0.0, hi=float(N), integer=True,
                                  prefix=f"beta_{i}_{len(cols_i)}_")
            cols_i.append(cols)
        beta_cols.append(cols_i)
        # population of the group
        model.add_constraint({int(v): 1.0 for cols in cols_i for v in cols}, "==", float(N))
        for m in range(s.M):
            w = s.weights[i, m]
            if w == 0.0:
                continue
            for j, c in enumerate(cs):
                R = shift_coefficients(c, m)
                if not R.any():
                    continue
                hlo = model.add_var(lo=0.0, hi=float(N), name=f"hlo_{m}_{i}_{j}")
                hhi = model.add_var(lo=0.0, hi=float(N), name=f"hhi_{m}_{i}_{j}")
                cols = cols_i[j]
                for row in np.unique(R, axis=0):
                    coeffs = {int(cols[p]): 1.0 for p in np.flatnonzero(row)}
                    model.add_constraint({**coeffs, hlo: -1.0}, ">=", 0.0)
                    model.add_constraint({**coeffs, hhi: -1.0}, "<=", 0.0)
                lo_terms[m][hlo] = w
                hi_terms[m][hhi] = w
    for m in range(s.M):
        if lo_terms[m] and s.P_lo[m] > 0:
            model.add_constraint(lo_terms[m], ">=", float(s.P_lo[m]))
        elif not lo_terms[m] and s.P_lo[m] > 0:
            model.add_constraint({}, ">=", float(s.P_lo[m]))  # nothing can reach a positive floor
        if hi_terms[m]:
            model.add_constraint(hi_terms[m], "<=", float(s.P_hi[m]))
        elif s.P_hi[m] < 0:
            model.add_constraint({}, "<=", float(s.P_hi[m]))
    return OmegaEncoding(beta_cols)


def lift_rows(cycles: Sequence[SafeCycle], beta_cols: Sequence[np.ndarray],
              dim: int) -> Dict[int, Dict[int, float]]:
    """Per aggregate node, the occupancy columns that land on it."""
    rows: Dict[int, Dict[int, float]] = {}
    for c, cols in zip(cycles, beta_cols):
        for node, col in zip(c.nodes, cols):
            rows.setdefault(int(node), {})
            rows[int(node)][int(col)] = rows[int(node)].get(int(col), 0.0) + 1.0
    return rows


def decode_assignment(values: np.ndarray, enc: OmegaEncoding, cycles: List[List[SafeCycle]],
                      dims: List[int]) -> CycleAssignment:
    betas = [[np.rint(values[cols]).astype(np.int64) for cols in grp] for grp in enc.beta_cols]
    return CycleAssignment(cycles, betas, dims)


def membership(xs: Sequence[np.ndarray], cycles: List[List[SafeCycle]], s: SafeSetSpec,
               budget: Budget = Budget()) -> Tuple[bool, Optional[CycleAssignment], Status]:
    """Decide whether the aggregate state lies in the implicit invariant set.

    Returns ``(feasible, witness, status)``. ``status`` is the MILP status;
    when the budget runs out before an answer is known, ``feasible`` is
    False and ``status`` says so.
    """
    dims = [len(x) for x in xs]
    pops = [int(np.asarray(x).sum()) for x in xs]
    model = MilpModel(0)
    enc = add_omega_constraints(model, cycles, s, pops)
    for i, (x, cs) in enumerate(zip(xs, cycles)):
        rows = lift_rows(cs, enc.beta_cols[i], dims[i])
        x = np.asarray(x)
        outside = [n for n in np.flatnonzero(x) if int(n) not in rows]
        if outside:
            return False, None, Status.INFEASIBLE
        for node, coeffs in sorted(rows.items()):
            model.add_constraint(coeffs, "==", float(x[node]))
    sol = solve_milp(model, budget=budget)
    if not sol.status.has_solution:
        return False, None, sol.status
    return True, decode_assignment(sol.values, enc, cycles, dims), sol.status


# -- invariance replay ---------------------------------------------------

@dataclass
class InvarianceCounterexample:
    step: int
    violations: List[Violation]
    reason: str = "unsafe"


def verify_invariance(ca: CycleAssignment, s: SafeSetSpec,
                      steps: Optional[int] = None) -> Optional[InvarianceCounterexample]:
    """Replay the circular shift and check safety at every step.

    The shift is applied through the aggregate dynamics with an explicitly
    built switch input, which must be admissible and must reproduce the
    lift of the rotated occupancy vectors. Returns None when every visited
    state is safe, otherwise the first counterexample.
    """
    if s.graphs is None:
        raise ValueError("the safe-set spec needs the group graphs")
    steps = ca.period() if steps is None else steps
    mats = [build_matrices(G) for G in s.graphs]
    cur = ca
    xs = lift(cur)
    for q in range(steps + 1):
        ok, viol = is_safe_state(xs, s)
        if not ok:
            return InvarianceCounterexample(q, viol)
        if q == steps:
            break
        nxt = []
        for G, (A, B), cs, bs, x in zip(s.graphs, mats, cur.cycles, cur.betas, xs):
            u = shift_input(G, cs, bs)
            check_admissible(G, x, u)
            nxt.append(np.rint(A @ x + B @ u).astype(np.int64))
        cur = cur.shifted(1)
        expect = lift(cur)
        if any(not np.array_equal(a, b) for a, b in zip(nxt, expect)):
            return InvarianceCounterexample(q + 1, [], reason="dynamics disagree with the shift")
        xs = nxt
    return None


def find_assignment(cycles: List[List[SafeCycle]], s: SafeSetSpec, populations: Sequence[int],
                    dims: List[int], rng: Optional[np.random.Generator] = None,
                    budget: Budget = Budget()) -> Optional[CycleAssignment]:
    """Some occupancy in ``Omega`` with the given group populations.

    The objective minimises the largest occupancy of any cycle position, so
    subsystems spread out over the cycles. With ``rng`` a small random
    linear term breaks ties differently per seed. None when ``Omega`` has no
    point with these populations.
    """
    model = MilpModel(0)
    enc = add_omega_constraints(model, cycles, s, populations)
    peak = model.add_var(lo=0.0, hi=float(max(populations, default=0)), obj=1.0, name="peak")
    for grp in enc.beta_cols:
        for cols in grp:
            for col in cols:
                model.add_constraint({int(col): 1.0, peak: -1.0}, "<=", 0.0)
            if rng is not None:
                model.objective[np.asarray(cols)] = rng.uniform(0.0, 0.01, size=len(cols))
    sol = solve_milp(model, budget=budget)
    if not sol.status.has_solution:
        return None
    return decode_assignment(sol.values, enc, cycles, dims)
