"""Individual-subsystem simulation, disaggregation and constraint monitors.

Each subsystem carries its temperature, mode, lockout counter and the index
of its abstract state. The abstract index follows the successor table of
the abstraction (``k <- succ[mode, k]``) rather than being recomputed from
the temperature: the closeness guarantee relates the temperature to this
abstract trajectory, not to the cell the temperature currently sits in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .abstraction import ON, AbstractionSpec, GroupDynamics
from .aggregate import AggregateGraph, SafeSetSpec

KEEP = -1


class HistogramMismatchError(RuntimeError):
    """The fleet's bucket counts differ from the aggregate state."""


class LockoutError(ValueError):
    """A command tried to switch a locked subsystem."""


@dataclass
class FleetState:
    """Per-group arrays describing every subsystem.

    ``tau`` counts steps since the last switch: 0 means unlocked, a switch
    sets it to ``min(1, tau_bar[m])`` and it returns to 0 after reaching
    ``tau_bar[m]``. ``locked_switches`` lists the ``(group, unit)`` pairs
    switched while locked during the step that produced this state.
    """

    groups: List[GroupDynamics]
    specs: List[AbstractionSpec]
    theta: List[np.ndarray]
    mode: List[np.ndarray]
    tau: List[np.ndarray]
    k: List[np.ndarray]
    t: int = 0
    locked_switches: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def sizes(self) -> List[int]:
        return [len(th) for th in self.theta]

    def on_counts(self) -> np.ndarray:
        return np.array([int(np.sum(m == ON)) for m in self.mode])

    def copy(self) -> "FleetState":
        return FleetState(self.groups, self.specs, [a.copy() for a in self.theta],
                          [a.copy() for a in self.mode], [a.copy() for a in self.tau],
                          [a.copy() for a in self.k], self.t, list(self.locked_switches))


def init_fleet(groups: Sequence[GroupDynamics], specs: Sequence[AbstractionSpec],
               graphs: Sequence[AggregateGraph], xs: Sequence[np.ndarray]) -> FleetState:
    """Fleet whose buckets reproduce the aggregate state ``xs``.

    Each subsystem starts at the centre of its grid cell, with the mode and
    lockout counter of its node.
    """
    theta, mode, tau, k = [], [], [], []
    for g, spec, G, x in zip(groups, specs, graphs, xs):
        nodes = np.repeat(np.arange(G.D_x), np.asarray(x, dtype=np.int64))
        k_i = G.node_k[nodes]
        theta.append(spec.grid[k_i].astype(float))
        mode.append(G.node_mode[nodes].astype(np.int64))
        tau.append(G.node_tau[nodes].astype(np.int64))
        k.append(k_i.astype(np.int64))
    return FleetState(list(groups), list(specs), theta, mode, tau, k)


def buckets(fleet: FleetState, i: int, G: AggregateGraph) -> np.ndarray:
    """Node index of every subsystem of group ``i`` in graph ``G``.

    Graphs without lockout layers put every subsystem on ``tau = 0``.
    """
    tb = np.asarray(G.tau_bar)
    tau = np.where(tb[fleet.mode[i]] > 0, fleet.tau[i], 0)
    return G.mode_offsets[fleet.mode[i]] + tau * G.K + fleet.k[i]


def fleet_histogram(fleet: FleetState, graphs: Sequence[AggregateGraph]) -> List[np.ndarray]:
    return [np.bincount(buckets(fleet, i, G), minlength=G.D_x).astype(np.int64)
            for i, G in enumerate(graphs)]


def disaggregate(xs: Sequence[np.ndarray], us: Sequence[np.ndarray], fleet: FleetState,
                 graphs: Sequence[AggregateGraph],
                 rng: Union[int, np.random.Generator, None] = None) -> List[np.ndarray]:
    """Per-subsystem mode commands realising the aggregate input ``us``.

    For every input ``(m1, m2, k)`` exactly ``u`` subsystems of bucket
    ``(m1, 0, k)`` are drawn uniformly without replacement and told to move
    to ``m2``; everyone else gets :data:`KEEP`. On lockout-free graphs the
    bucket ignores the real lockout counters, so locked subsystems may be
    drawn.
    """
    rng = np.random.default_rng(rng)
    hist = fleet_histogram(fleet, graphs)
    for i, (h, x) in enumerate(zip(hist, xs)):
        if not np.array_equal(h, np.asarray(x)):
            bad = int(np.flatnonzero(h != np.asarray(x))[0])
            raise HistogramMismatchError(
                f"group {i}: node {graphs[i].label(bad)} holds {h[bad]} subsystems, "
                f"aggregate state says {x[bad]}")
    commands = []
    for i, (G, u) in enumerate(zip(graphs, us)):
        cmd = np.full(fleet.sizes[i], KEEP, dtype=np.int64)
        where = buckets(fleet, i, G)
        for c in np.flatnonzero(u):
            m1, m2, k = G.input_label(int(c))
            pool = np.flatnonzero(where == G.node(m1, 0, k))
            if u[c] > pool.size:
                raise HistogramMismatchError(f"group {i}: input {(m1, m2, k)} switches {u[c]} "
                                             f"of {pool.size} subsystems")
            cmd[rng.choice(pool, size=int(u[c]), replace=False)] = m2
        commands.append(cmd)
    return commands


def step_fleet(fleet: FleetState, commands: Optional[Sequence[np.ndarray]] = None,
               allow_locked: bool = False) -> FleetState:
    """Apply mode commands and advance every subsystem one step.

    A command on a locked subsystem raises :class:`LockoutError` unless
    ``allow_locked`` is set, in which case it is applied and recorded in
    ``locked_switches`` of the returned state.
    """
    out = fleet.copy()
    out.t = fleet.t + 1
    out.locked_switches = []
    for i, g in enumerate(fleet.groups):
        mode = fleet.mode[i]
        tau = fleet.tau[i]
        cmd = None if commands is None else np.asarray(commands[i])
        new_mode = mode.copy()
        new_tau = tau.copy()
        tb = np.asarray(g.tau_bar)
        # autonomous counter update for everyone
        locked = tau > 0
        new_tau[locked] = np.where(tau[locked] < tb[mode[locked]], tau[locked] + 1, 0)
        if cmd is not None:
            sw = np.flatnonzero((cmd != KEEP) & (cmd != mode))
            bad = sw[tau[sw] > 0]
            if bad.size and not allow_locked:
                raise LockoutError(f"group {i}: unit {int(bad[0])} is locked "
                                   f"(tau={int(tau[bad[0]])})")
            out.locked_switches.extend((i, int(j)) for j in bad)
            new_mode[sw] = cmd[sw]
            new_tau[sw] = np.minimum(1, tb[cmd[sw]])
        drive = np.where(new_mode == ON, g.R * g.p_tr, 0.0)
        out.theta[i] = g.a * fleet.theta[i] + (1.0 - g.a) * (g.T_a - drive)
        out.k[i] = fleet.specs[i].succ[new_mode, fleet.k[i]]
        out.mode[i] = new_mode
        out.tau[i] = new_tau
    return out


# -- monitoring ------------------------------------------------------------

@dataclass(frozen=True)
class DeadbandViolation:
    t: int
    group: int
    unit: int
    theta: float
    kind: str = "deadband"


@dataclass(frozen=True)
class LockoutViolation:
    t: int
    group: int
    unit: int
    kind: str = "lockout"


@dataclass(frozen=True)
class AggregateBoundViolation:
    t: int
    mode: int
    value: float
    bound: float
    kind: str = "aggregate-bound"

    @property
    def exceedance(self) -> float:
        return self.value - self.bound


Entry = Union[DeadbandViolation, LockoutViolation, AggregateBoundViolation]


@dataclass
class ViolationLog:
    """Append-only list of monitor entries."""

    entries: List[Entry] = field(default_factory=list)

    def extend(self, items: Sequence[Entry]) -> None:
        self.entries.extend(items)

    def __len__(self) -> int:
        return len(self.entries)

    def of_kind(self, kind: str) -> List[Entry]:
        return [e for e in self.entries if e.kind == kind]

    def count(self, kind: str) -> int:
        return len(self.of_kind(kind))

    def units_with(self, kind: str) -> set:
        return {(e.group, e.unit) for e in self.of_kind(kind)}

    def rows(self) -> List[Tuple]:
        """``(t, kind, group, unit, mode, value, bound)`` per entry."""
        out = []
        for e in self.entries:
            if isinstance(e, DeadbandViolation):
                out.append((e.t, e.kind, e.group, e.unit, -1, e.theta, float("nan")))
            elif isinstance(e, LockoutViolation):
                out.append((e.t, e.kind, e.group, e.unit, -1, float("nan"), float("nan")))
            else:
                out.append((e.t, e.kind, -1, -1, e.mode, e.value, e.bound))
        return out


def aggregate_power(fleet: FleetState, weights: np.ndarray) -> np.ndarray:
    """Weighted mode counts ``sum_i w[i, m] * (# in mode m)`` from the fleet."""
    weights = np.atleast_2d(weights)
    M = weights.shape[1]
    total = np.zeros(M)
    for i, mode in enumerate(fleet.mode):
        total += weights[i] * np.bincount(mode, minlength=M)
    return total


def monitor(fleet: FleetState, s: SafeSetSpec, tol: float = 1e-9) -> List[Entry]:
    """Constraint violations visible in ``fleet``.

    Checks the dead-bands, the lockout switches recorded on the state and
    the aggregate power bounds.
    """
    out: List[Entry] = []
    t = fleet.t
    for i, g in enumerate(fleet.groups):
        lo, hi = g.deadband
        th = fleet.theta[i]
        for j in np.flatnonzero((th < lo - tol) | (th > hi + tol)):
            out.append(DeadbandViolation(t, i, int(j), float(th[j])))
    out.extend(LockoutViolation(t, i, j) for i, j in fleet.locked_switches)
    power = aggregate_power(fleet, s.weights)
    for m in range(s.M):
        if power[m] > s.P_hi[m] + tol:
            out.append(AggregateBoundViolation(t, m, float(power[m]), float(s.P_hi[m])))
        elif power[m] < s.P_lo[m] - tol:
            out.append(AggregateBoundViolation(t, m, float(power[m]), float(s.P_lo[m])))
    return out
