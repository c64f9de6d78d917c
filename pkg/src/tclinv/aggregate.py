"""Lockout-augmented transition graph and the aggregate count dynamics.

Each node ``(m, tau, k)`` counts the subsystems of a group that are in mode
``m``, have lockout counter ``tau`` and sit at grid point ``k``. Nodes are
flattened lexicographically: all ``tau`` layers of mode 0 first, each layer
holding ``K`` grid points, then mode 1, and so on.

Switch inputs ``u[m1, m2, k]`` are flattened as ``(m1, j, k)`` where ``j``
runs over the target modes ``m2 != m1`` in increasing order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .abstraction import AbstractionSpec, GroupDynamics

# edge rules
RULE_STAY = 1      # unlocked, no switch
RULE_COUNT = 2     # locked, counter advances
RULE_RELEASE = 3   # counter at its maximum, unlocks
RULE_SWITCH = 4    # unlocked, switches mode


class InadmissibleInputError(ValueError):
    """A switch input asks more subsystems to switch than are unlocked."""


@dataclass(frozen=True)
class AggregateGraph:
    """Transition graph of one group.

    Attributes
    ----------
    succ : (M, K) int array
        Successor grid index per mode.
    safe_k : (K,) bool array
        Safe grid points.
    tau_bar : tuple of int
        Lockout length per mode.
    edges : (E, 3) int array
        ``(source node, target node, rule)`` rows.
    """

    gid: int
    succ: np.ndarray
    safe_k: np.ndarray
    tau_bar: Tuple[int, ...]
    edges: np.ndarray = field(repr=False)

    @property
    def M(self) -> int:
        return self.succ.shape[0]

    @property
    def K(self) -> int:
        return self.succ.shape[1]

    @cached_property
    def mode_offsets(self) -> np.ndarray:
        layers = np.asarray(self.tau_bar) + 1
        return np.concatenate([[0], np.cumsum(layers * self.K)])

    @property
    def D_x(self) -> int:
        return int(self.K * sum(t + 1 for t in self.tau_bar))

    @property
    def D_u(self) -> int:
        return self.K * self.M * (self.M - 1)

    def node(self, m: int, tau: int, k: int) -> int:
        if not (0 <= tau <= self.tau_bar[m] and 0 <= k < self.K):
            raise IndexError(f"no node ({m}, {tau}, {k})")
        return int(self.mode_offsets[m] + tau * self.K + k)

    def label(self, idx: int) -> Tuple[int, int, int]:
        off = self.mode_offsets
        m = int(np.searchsorted(off, idx, side="right") - 1)
        r = idx - off[m]
        return m, int(r // self.K), int(r % self.K)

    def input_index(self, m1: int, m2: int, k: int) -> int:
        if m1 == m2:
            raise IndexError("a switch needs two different modes")
        j = m2 if m2 < m1 else m2 - 1
        return (m1 * (self.M - 1) + j) * self.K + k

    def input_label(self, idx: int) -> Tuple[int, int, int]:
        k = idx % self.K
        q = idx // self.K
        m1, j = divmod(q, self.M - 1)
        m2 = j if j < m1 else j + 1
        return int(m1), int(m2), int(k)

    # per-node attributes, computed once on first use
    @cached_property
    def node_mode(self) -> np.ndarray:
        return np.repeat(np.arange(self.M), (np.asarray(self.tau_bar) + 1) * self.K)

    @cached_property
    def node_tau(self) -> np.ndarray:
        return np.concatenate([np.repeat(np.arange(t + 1), self.K) for t in self.tau_bar])

    @cached_property
    def node_k(self) -> np.ndarray:
        return np.tile(np.arange(self.K), sum(t + 1 for t in self.tau_bar))

    @cached_property
    def safe_nodes(self) -> np.ndarray:
        return self.safe_k[self.node_k]

    @cached_property
    def unlocked_nodes(self) -> np.ndarray:
        return self.node_tau == 0

    def predecessors(self, node: int) -> np.ndarray:
        return self.edges[self.edges[:, 1] == node, 0]

    def successors(self, node: int) -> np.ndarray:
        return self.edges[self.edges[:, 0] == node, 1]

    def switch_target(self, m1: int, m2: int, k: int) -> int:
        """Node reached by switching from ``(m1, 0, k)`` to mode ``m2``."""
        return self.node(m2, min(1, self.tau_bar[m2]), int(self.succ[m2, k]))

    def autonomous_target(self, node: int) -> int:
        m, tau, k = self.label(node)
        nk = int(self.succ[m, k])
        if tau == 0:
            return self.node(m, 0, nk)
        if tau < self.tau_bar[m]:
            return self.node(m, tau + 1, nk)
        return self.node(m, 0, nk)

    def export_edges(self) -> str:
        """Edge list, one ``(m1,tau1,k1) -> (m2,tau2,k2)`` per line."""
        lines = [f"# group {self.gid}: M={self.M} K={self.K} tau_bar={list(self.tau_bar)} "
                 f"D_x={self.D_x} D_u={self.D_u}; modes 0=on 1=off; indices 0-based"]
        for s, d, _ in self.edges:
            a, b = self.label(int(s)), self.label(int(d))
            lines.append(f"({a[0]},{a[1]},{a[2]}) -> ({b[0]},{b[1]},{b[2]})")
        return "\n".join(lines) + "\n"


def build_graph(spec: AbstractionSpec, g: Optional[GroupDynamics] = None,
                tau_bar: Optional[Sequence[int]] = None) -> AggregateGraph:
    """Graph of all autonomous and controlled transitions.

    ``tau_bar`` defaults to the lockout lengths of ``g``; pass zeros to get
    the lockout-free graph.
    """
    if tau_bar is None:
        if g is None:
            raise ValueError("need group dynamics or explicit tau_bar")
        tau_bar = g.tau_bar
    tau_bar = tuple(int(t) for t in tau_bar)
    succ = np.asarray(spec.succ, dtype=np.int64)
    M, K = succ.shape
    if len(tau_bar) != M:
        raise ValueError("tau_bar length must equal the mode count")
    stub = AggregateGraph(gid=spec.gid, succ=succ, safe_k=np.asarray(spec.safe, dtype=bool),
                          tau_bar=tau_bar, edges=np.empty((0, 3), dtype=np.int64))
    ks = np.arange(K)
    rows = []
    for m1 in range(M):
        nk = succ[m1]
        # rule 1: unlocked, same mode
        rows.append(np.column_stack([stub.node(m1, 0, 0) + ks, stub.node(m1, 0, 0) + nk,
                                     np.full(K, RULE_STAY)]))
        for tau in range(1, tau_bar[m1] + 1):
            src = stub.node(m1, tau, 0) + ks
            if tau < tau_bar[m1]:
                rows.append(np.column_stack([src, stub.node(m1, tau + 1, 0) + nk,
                                             np.full(K, RULE_COUNT)]))
            else:
                rows.append(np.column_stack([src, stub.node(m1, 0, 0) + nk,
                                             np.full(K, RULE_RELEASE)]))
        for m2 in range(M):
            if m2 == m1:
                continue
            dst = stub.node(m2, min(1, tau_bar[m2]), 0) + succ[m2]
            rows.append(np.column_stack([stub.node(m1, 0, 0) + ks, dst, np.full(K, RULE_SWITCH)]))
    edges = np.vstack(rows).astype(np.int64)
    return AggregateGraph(gid=spec.gid, succ=succ, safe_k=stub.safe_k, tau_bar=tau_bar,
                          edges=edges)


def build_matrices(G: AggregateGraph, net: bool = True) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse ``A`` (D_x x D_x) and ``B`` (D_x x D_u).

    With ``net=True`` (default) every switch input is also removed from the
    unswitched flow of its source node, so ``x+ = A x + B u`` conserves the
    population for any admissible ``u``. ``net=False`` returns the 0/1 input
    matrix that only routes switchers to their new node.
    """
    auto = G.edges[G.edges[:, 2] != RULE_SWITCH]
    A = sp.csr_matrix((np.ones(len(auto)), (auto[:, 1], auto[:, 0])), shape=(G.D_x, G.D_x))
    rows, cols, vals = [], [], []
    for m1 in range(G.M):
        for m2 in range(G.M):
            if m1 == m2:
                continue
            for k in range(G.K):
                c = G.input_index(m1, m2, k)
                rows.append(G.switch_target(m1, m2, k))
                cols.append(c)
                vals.append(1.0)
                if net:
                    rows.append(G.node(m1, 0, int(G.succ[m1, k])))
                    cols.append(c)
                    vals.append(-1.0)
    B = sp.coo_matrix((vals, (rows, cols)), shape=(G.D_x, G.D_u)).tocsr()
    B.sum_duplicates()
    B.eliminate_zeros()
    return A, B


def admissibility_matrix(G: AggregateGraph) -> sp.csr_matrix:
    """``S`` with ``S u <= x`` encoding the admissible input set.

    Row ``n`` of ``S`` sums all switch inputs leaving node ``n``; rows of
    locked nodes are empty.
    """
    rows, cols = [], []
    for m1 in range(G.M):
        for m2 in range(G.M):
            if m1 == m2:
                continue
            for k in range(G.K):
                rows.append(G.node(m1, 0, k))
                cols.append(G.input_index(m1, m2, k))
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(G.D_x, G.D_u))


def check_admissible(G: AggregateGraph, x: np.ndarray, u: np.ndarray) -> None:
    u = np.asarray(u)
    if np.any(u < 0):
        raise InadmissibleInputError("negative switch count")
    need = admissibility_matrix(G) @ u
    over = np.flatnonzero(need > np.asarray(x) + 1e-9)
    if over.size:
        n = int(over[0])
        raise InadmissibleInputError(
            f"group {G.gid}: node {G.label(n)} switches {need[n]:g} of {x[n]:g} subsystems")


def step_aggregate(G: AggregateGraph, x: np.ndarray, u: Optional[np.ndarray] = None,
                   matrices: Optional[Tuple[sp.spmatrix, sp.spmatrix]] = None) -> np.ndarray:
    """Advance the count vector one step under switch input ``u``."""
    x = np.asarray(x)
    A, B = matrices if matrices is not None else build_matrices(G)
    if u is None:
        out = A @ x
    else:
        check_admissible(G, x, u)
        out = A @ x + B @ np.asarray(u)
    if np.issubdtype(x.dtype, np.integer):
        out = np.rint(out).astype(x.dtype)
    return out


def mode_counts(G: AggregateGraph, x: np.ndarray) -> np.ndarray:
    """Number of subsystems per mode."""
    return np.bincount(G.node_mode, weights=np.asarray(x, dtype=float), minlength=G.M)


@dataclass
class SafeSetSpec:
    """Local and global constraints on the aggregate state.

    Attributes
    ----------
    graphs : list of AggregateGraph or None
        One per group; their ``safe_k`` masks are the local constraints.
        May be None when only the power bounds are needed.
    P_lo, P_hi : (M,) arrays
        Bounds on the weighted mode counts (kW).
    weights : (g, M) array
        Power per subsystem of each group in each mode (kW).
    """

    graphs: Optional[List[AggregateGraph]]
    P_lo: np.ndarray
    P_hi: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.P_lo = np.asarray(self.P_lo, dtype=float)
        self.P_hi = np.asarray(self.P_hi, dtype=float)
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if np.any(self.P_lo > self.P_hi):
            raise ValueError("P_lo must not exceed P_hi")
        if self.weights.shape[1] != self.P_lo.size or self.P_hi.shape != self.P_lo.shape:
            raise ValueError("weights must be (groups, modes) matching the bounds")
        if self.graphs is not None and len(self.graphs) != self.weights.shape[0]:
            raise ValueError("one weight row per group graph")
        if np.any(self.weights < 0):
            raise ValueError("mode weights must be non-negative")

    @property
    def M(self) -> int:
        return self.P_lo.size

    @property
    def groups(self) -> int:
        return self.weights.shape[0]

    def mode_power(self, xs: Sequence[np.ndarray]) -> np.ndarray:
        """Weighted mode counts ``sum_i p_m^(i) * (# in mode m)``."""
        total = np.zeros(self.M)
        for G, w, x in zip(self.graphs, self.weights, xs):
            total += w * mode_counts(G, x)
        return total


@dataclass(frozen=True)
class Violation:
    kind: str                 # "unsafe-node" or "bound"
    group: int = -1
    node: Tuple[int, int, int] = (-1, -1, -1)
    count: float = 0.0
    mode: int = -1
    value: float = 0.0
    bound: float = 0.0


def is_safe_state(xs: Sequence[np.ndarray], s: SafeSetSpec,
                  tol: float = 1e-9) -> Tuple[bool, List[Violation]]:
    """Check every group's counts against the safe nodes and the power bounds."""
    out: List[Violation] = []
    for i, (G, x) in enumerate(zip(s.graphs, xs)):
        x = np.asarray(x)
        bad = np.flatnonzero((~G.safe_nodes) & (x > tol))
        out.extend(Violation("unsafe-node", group=i, node=G.label(int(n)), count=float(x[n]))
                   for n in bad)
    power = s.mode_power(xs)
    for m in range(s.M):
        if power[m] < s.P_lo[m] - tol:
            out.append(Violation("bound", mode=m, value=float(power[m]), bound=float(s.P_lo[m])))
        elif power[m] > s.P_hi[m] + tol:
            out.append(Violation("bound", mode=m, value=float(power[m]), bound=float(s.P_hi[m])))
    return not out, out


def histogram(G: AggregateGraph, modes: Iterable[int], taus: Iterable[int],
              ks: Iterable[int]) -> np.ndarray:
    """Count vector of individual subsystems given their node labels."""
    x = np.zeros(G.D_x, dtype=np.int64)
    for m, tau, k in zip(modes, taus, ks):
        x[G.node(int(m), int(tau), int(k))] += 1
    return x
