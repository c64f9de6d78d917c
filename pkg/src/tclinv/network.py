"""Radial feeder power flow and the network-safe aggregate power bound.

Buses are numbered ``0..n-1`` with bus 0 the slack (substation). Every
other bus has one parent closer to the slack and the line to that parent
carries impedance ``r + jx`` in per unit. Loads are constant power. The
aggregate TCL power is spread over the buses with weights ``w_b`` at a
fixed power factor.

Feeder file format (whitespace separated, ``#`` starts a comment)::

    base_kva 100
    slack_voltage 1.0
    v_min 0.95
    tcl_pf 0.97
    #   id parent  r      x      p_kw  q_kvar  tcl_weight
    bus 0  -1      0      0      0     0       0
    bus 1   0      0.01   0.02   2.0   0.6     0.1
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

MAX_ITER = 100
TOL = 1e-8


class PowerFlowError(RuntimeError):
    """The sweep did not converge (usually a load beyond the feeder's limit)."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass
class NetworkModel:
    """Balanced radial feeder.

    Attributes
    ----------
    parent : (n,) int array
        ``parent[0] = -1``; every other bus points towards the slack.
    r, x : (n,) arrays
        Impedance of the line from each bus to its parent (p.u.); entry 0
        is unused.
    p_load, q_load : (n,) arrays
        Uncontrollable load in kW and kvar.
    tcl_weight : (n,) array
        Share of the aggregate TCL power drawn at each bus; sums to one.
    """

    parent: np.ndarray
    r: np.ndarray
    x: np.ndarray
    p_load: np.ndarray
    q_load: np.ndarray
    tcl_weight: np.ndarray
    base_kva: float = 100.0
    slack_voltage: float = 1.0
    v_min: float = 0.95
    tcl_pf: float = 0.97

    def __post_init__(self):
        self.parent = np.asarray(self.parent, dtype=np.int64)
        n = self.parent.size
        for name in ("r", "x", "p_load", "q_load", "tcl_weight"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} needs one entry per bus")
            setattr(self, name, arr)
        if n == 0 or self.parent[0] != -1:
            raise ValueError("bus 0 must be the slack with parent -1")
        if n > 1:
            if np.any(self.parent[1:] < 0) or np.any(self.parent[1:] >= n):
                raise ValueError("every non-slack bus needs a parent bus")
            if np.any(self.r[1:] <= 0) or np.any(self.x[1:] <= 0):
                raise ValueError("line impedances must be positive")
        if np.any(self.tcl_weight < 0):
            raise ValueError("TCL weights must be non-negative")
        total = self.tcl_weight.sum()
        if n > 1 and not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"TCL weights sum to {total}, expected 1")
        if not 0 < self.tcl_pf <= 1:
            raise ValueError("power factor must lie in (0, 1]")
        self._order = self._topological_order()

    @property
    def n(self) -> int:
        return self.parent.size

    def _topological_order(self) -> np.ndarray:
        """Buses sorted so every parent precedes its children."""
        depth = np.full(self.n, -1)
        depth[0] = 0
        for b in range(1, self.n):
            path, cur = [], b
            while depth[cur] < 0:
                path.append(cur)
                cur = self.parent[cur]
                if len(path) > self.n:
                    raise ValueError("parent pointers contain a cycle")
            for d, node in enumerate(reversed(path), start=depth[cur] + 1):
                depth[node] = d
        return np.argsort(depth, kind="stable")

    def injections(self, P_agg: float) -> np.ndarray:
        """Complex per-unit load at every bus for aggregate TCL power ``P_agg`` (kW)."""
        tan_phi = math.tan(math.acos(self.tcl_pf))
        p = self.p_load + self.tcl_weight * P_agg
        q = self.q_load + self.tcl_weight * P_agg * tan_phi
        return (p + 1j * q) / self.base_kva

    def with_v_min(self, v_min: float) -> "NetworkModel":
        return replace(self, v_min=v_min)


@dataclass
class PowerFlowResult:
    voltage: np.ndarray          # complex bus voltages (p.u.)
    branch_current: np.ndarray   # current from parent into each bus (p.u.)
    residual: float
    iterations: int

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.voltage)


def solve_power_flow(net: NetworkModel, P_agg: float, max_iter: int = MAX_ITER,
                     tol: float = TOL) -> PowerFlowResult:
    """Backward/forward sweep for aggregate TCL power ``P_agg`` (kW).

    Raises :class:`PowerFlowError` when the largest voltage change between
    sweeps is still above ``tol`` after ``max_iter`` sweeps.
    """
    if P_agg < 0:
        raise ValueError("aggregate power must be non-negative")
    S = net.injections(P_agg)
    z = net.r + 1j * net.x
    order = net._order
    V = np.full(net.n, complex(net.slack_voltage))
    I = np.zeros(net.n, dtype=complex)
    residual = math.inf
    for it in range(1, max_iter + 1):
        # backward: load currents summed towards the slack
        I = np.conj(S / V)
        for b in order[::-1]:
            if b != 0:
                I[net.parent[b]] += I[b]
        # forward: voltage drops away from the slack
        V_new = V.copy()
        V_new[0] = net.slack_voltage
        for b in order:
            if b != 0:
                V_new[b] = V_new[net.parent[b]] - z[b] * I[b]
        residual = float(np.max(np.abs(V_new - V)))
        V = V_new
        if not np.all(np.isfinite(V)):
            break
        if residual < tol:
            return PowerFlowResult(V, I, residual, it)
    raise PowerFlowError(f"power flow did not converge at P_agg={P_agg:g} kW "
                         f"(last change {residual:.3g})", residual)


def losses(net: NetworkModel, res: PowerFlowResult) -> complex:
    """Total complex line losses (p.u.)."""
    z = net.r + 1j * net.x
    I = res.branch_current.copy()
    I[0] = 0.0
    return complex(np.sum(z * np.abs(I) ** 2))


def slack_injection(net: NetworkModel, res: PowerFlowResult) -> complex:
    """Complex power entering the feeder at the slack bus (p.u.)."""
    return complex(res.voltage[0] * np.conj(res.branch_current[0]))


def check_voltages(res: Union[PowerFlowResult, Sequence[float], np.ndarray],
                   v_min: float) -> List[int]:
    """Buses below ``v_min``; an empty list means the voltages are fine."""
    mag = res.magnitude if isinstance(res, PowerFlowResult) else np.asarray(res, dtype=float)
    return [int(b) for b in np.flatnonzero(mag < v_min)]


def voltages_ok(net: NetworkModel, P_agg: float, v_min: Optional[float] = None) -> bool:
    v_min = net.v_min if v_min is None else v_min
    try:
        res = solve_power_flow(net, P_agg)
    except PowerFlowError:
        return False
    return not check_voltages(res, v_min)


def compute_safe_power_bound(net: NetworkModel, P_cap: float, v_min: Optional[float] = None,
                             tol: float = 0.1) -> float:
    """Largest aggregate TCL power in ``[0, P_cap]`` keeping every bus above ``v_min``.

    Bisection, valid because bus voltages fall monotonically as the load of
    a radial feeder grows. The result is feasible and lies within ``tol``
    of the true limit. A non-converging power flow counts as unsafe.
    """
    if not voltages_ok(net, 0.0, v_min):
        raise ValueError("voltage floor is violated even without TCL load")
    if voltages_ok(net, P_cap, v_min):
        return float(P_cap)
    lo, hi = 0.0, float(P_cap)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if voltages_ok(net, mid, v_min):
            lo = mid
        else:
            hi = mid
    return lo


def two_bus_voltage(V0: float, r: float, x: float, P: float, Q: float) -> float:
    """Closed-form receiving-end magnitude of a single line with a constant
    power load ``P + jQ`` (all per unit), high-voltage solution."""
    a = V0 ** 2 - 2.0 * (r * P + x * Q)
    disc = a ** 2 - 4.0 * (r ** 2 + x ** 2) * (P ** 2 + Q ** 2)
    if disc < 0:
        raise ValueError("load beyond the line's transfer limit")
    return math.sqrt((a + math.sqrt(disc)) / 2.0)


# -- feeder files ----------------------------------------------------------

_FEEDER_PARAMS = {"base_kva", "slack_voltage", "v_min", "tcl_pf"}


def parse_feeder(text: str) -> NetworkModel:
    params = {}
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "bus":
                if len(parts) != 8:
                    raise ValueError("bus needs 7 fields")
                rows.append((int(parts[1]), int(parts[2]), *map(float, parts[3:])))
            elif len(parts) == 2:
                if parts[0] not in _FEEDER_PARAMS:
                    raise ValueError(f"unknown feeder parameter {parts[0]!r}")
                params[parts[0]] = float(parts[1])
            else:
                raise ValueError(f"cannot parse {raw!r}")
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    rows.sort()
    if [r[0] for r in rows] != list(range(len(rows))):
        raise ValueError("bus ids must be 0..n-1")
    cols = list(zip(*rows)) if rows else [[]] * 7
    return NetworkModel(parent=cols[1], r=cols[2], x=cols[3], p_load=cols[4], q_load=cols[5],
                        tcl_weight=cols[6], **params)


def load_feeder(path: Union[str, Path]) -> NetworkModel:
    return parse_feeder(Path(path).read_text())


def dump_feeder(net: NetworkModel) -> str:
    lines = [f"base_kva {net.base_kva:g}", f"slack_voltage {net.slack_voltage:g}",
             f"v_min {net.v_min:g}", f"tcl_pf {net.tcl_pf:g}",
             "#   id parent r x p_kw q_kvar tcl_weight"]
    for b in range(net.n):
        lines.append(f"bus {b} {net.parent[b]} {net.r[b]:.10g} {net.x[b]:.10g} "
                     f"{net.p_load[b]:.10g} {net.q_load[b]:.10g} {net.tcl_weight[b]:.10g}")
    return "\n".join(lines) + "\n"


def default_feeder_path() -> Path:
    return Path(__file__).parent / "data" / "feeder12.txt"


def uniform_weights(net: NetworkModel) -> np.ndarray:
    """Equal TCL share on every bus that carries uncontrollable load."""
    loaded = net.p_load > 0
    w = np.zeros(net.n)
    if loaded.any():
        w[loaded] = 1.0 / loaded.sum()
    return w
