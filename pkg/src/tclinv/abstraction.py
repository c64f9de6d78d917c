"""Continuous TCL dynamics and their finite grid abstraction.

A group of homogeneous TCLs follows the scalar affine switched model

    theta+ = a * theta + (1 - a) * (T_a - R * p_tr * [mode is on])

which is a contraction with rate ``a`` in every mode. Its abstraction
replaces the temperature by the centre of the ``eta``-cell that contains it
and tabulates the successor cell of each centre under each mode.

Modes are 0-based: ``ON = 0`` consumes power, ``OFF = 1`` does not.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

ON = 0
OFF = 1
MODE_NAMES = ("on", "off")

# slack used when comparing the closeness and erosion inequalities in floating point
_INEQ_TOL = 1e-12


class DomainEscapeWarning(RuntimeWarning):
    """A state left the declared domain after one step."""


class EmptySafeSetError(ValueError):
    """The eroded dead-band contains no grid point."""


@dataclass
class GroupDynamics:
    """Parameters of one group of homogeneous TCLs.

    Parameters
    ----------
    a : float
        Discrete-time decay factor ``exp(-dt / (R C))``; must lie in [0, 1].
    T_a : float
        Ambient temperature (degC).
    R : float
        Thermal resistance (degC/kW).
    p_tr : float
        Thermal power while on (kW).
    zeta : float
        Coefficient of performance; electrical power is ``p_tr / zeta``.
    deadband, domain : (float, float)
        Temperature dead-band and the (larger) state domain, degC.
    tau_bar : tuple of int
        Lockout length in steps, per mode (ON, OFF).
    N : int
        Number of TCLs in the group.
    radii : tuple of float, optional
        Radii of the contraction neighbourhoods per mode; ``inf`` means global.
    gid : int
        Group identifier.
    """

    a: float
    T_a: float
    R: float
    p_tr: float
    deadband: Tuple[float, float]
    domain: Tuple[float, float]
    tau_bar: Tuple[int, ...] = (0, 0)
    N: int = 1
    zeta: float = 1.0
    radii: Tuple[float, ...] = (math.inf, math.inf)
    gid: int = 0

    def __post_init__(self):
        self.deadband = tuple(float(v) for v in self.deadband)
        self.domain = tuple(float(v) for v in self.domain)
        self.tau_bar = tuple(int(v) for v in self.tau_bar)
        self.radii = tuple(float(v) for v in self.radii)
        if not 0.0 <= self.a <= 1.0:
            raise ValueError(f"decay factor a={self.a} outside [0, 1]")
        lo, hi = self.deadband
        if not lo < hi:
            raise ValueError(f"empty dead-band {self.deadband}")
        if not (self.domain[0] <= lo and hi <= self.domain[1]):
            raise ValueError(f"dead-band {self.deadband} not inside domain {self.domain}")
        if len(self.tau_bar) != self.mode_count or min(self.tau_bar) < 0:
            raise ValueError(f"tau_bar must hold {self.mode_count} non-negative integers")
        if len(self.radii) != self.mode_count or min(self.radii) <= 0:
            raise ValueError("contraction radii must be positive, one per mode")
        if self.N < 0:
            raise ValueError("population must be non-negative")

    @classmethod
    def from_physical(cls, C: float, R: float, p_tr: float, T_a: float, dt: float,
                      t_lock: Sequence[float], deadband, domain, N: int = 1,
                      zeta: float = 1.0, gid: int = 0) -> "GroupDynamics":
        """Build from thermal capacitance ``C`` (kWh/degC), ``dt`` and lockout
        durations ``t_lock`` in seconds."""
        a = math.exp(-(dt / 3600.0) / (R * C))
        tau_bar = tuple(lockout_steps(t, dt) for t in t_lock)
        return cls(a=a, T_a=T_a, R=R, p_tr=p_tr, deadband=deadband, domain=domain,
                   tau_bar=tau_bar, N=N, zeta=zeta, gid=gid)

    @property
    def mode_count(self) -> int:
        return 2

    @property
    def power(self) -> float:
        """Electrical power of one TCL while on (kW)."""
        return self.p_tr / self.zeta

    @property
    def mode_power(self) -> np.ndarray:
        """Electrical power per mode (kW)."""
        return np.array([self.power, 0.0])

    @property
    def L(self) -> np.ndarray:
        """Contraction constant per mode (equal to ``a`` for the affine model)."""
        return np.full(self.mode_count, self.a)

    @property
    def targets(self) -> np.ndarray:
        """Fixed point of each mode's dynamics."""
        return np.array([self.T_a - self.R * self.p_tr, self.T_a])

    def to_dict(self) -> dict:
        return {"a": self.a, "T_a": self.T_a, "R": self.R, "p_tr": self.p_tr,
                "deadband": list(self.deadband), "domain": list(self.domain),
                "tau_bar": list(self.tau_bar), "N": self.N, "zeta": self.zeta,
                "radii": [r if math.isfinite(r) else "inf" for r in self.radii],
                "gid": self.gid}

    @classmethod
    def from_dict(cls, d: dict) -> "GroupDynamics":
        d = dict(d)
        if "radii" in d:
            d["radii"] = tuple(float(r) for r in d["radii"])
        return cls(**d)


def lockout_steps(t_lock: float, dt: float) -> int:
    """Number of steps a TCL stays locked: ``ceil(t_lock / dt)``."""
    # guard against 150/30 style ratios landing a hair above an integer
    return int(math.ceil(t_lock / dt - 1e-9))


def step_dynamics(g: GroupDynamics, theta, mode, perturbation=0.0, warn: bool = True):
    """One step of the affine TCL model.

    ``theta`` and ``mode`` may be scalars or arrays of equal shape. A
    :class:`DomainEscapeWarning` is issued when a result leaves the domain.
    """
    theta = np.asarray(theta, dtype=float)
    mode = np.asarray(mode)
    target = np.where(mode == ON, g.T_a - g.R * g.p_tr, g.T_a)
    out = g.a * theta + (1.0 - g.a) * target + perturbation
    if warn and np.any((out < g.domain[0]) | (out > g.domain[1])):
        warnings.warn(f"group {g.gid}: state left domain {g.domain}", DomainEscapeWarning,
                      stacklevel=2)
    return float(out) if out.ndim == 0 else out


@dataclass
class BisimulationReport:
    ok: bool
    offending_modes: List[int]
    min_eps: float
    margins: np.ndarray


def validate_bisimulation(g: Union[GroupDynamics, Sequence[float], float], eta: float,
                          eps: float) -> BisimulationReport:
    """Check ``(1 - L_m) * eps >= eta / 2`` for every mode.

    ``g`` may be a :class:`GroupDynamics` or the contraction constants directly.
    The report lists the modes that fail and the smallest admissible ``eps``.
    """
    if eta <= 0 or eps <= 0:
        raise ValueError("eta and eps must be positive")
    L = g.L if isinstance(g, GroupDynamics) else np.atleast_1d(np.asarray(g, dtype=float))
    margins = (1.0 - L) * eps - eta / 2.0
    bad = [int(m) for m in np.flatnonzero(margins < -_INEQ_TOL * max(1.0, eta))]
    with np.errstate(divide="ignore"):
        min_eps = float(np.max(np.where(L < 1.0, eta / (2.0 * (1.0 - L)), np.inf)))
    return BisimulationReport(ok=not bad, offending_modes=bad, min_eps=min_eps, margins=margins)


def abstract_point(eta: float, theta):
    """Centre of the ``eta``-cell containing ``theta``."""
    theta = np.asarray(theta, dtype=float)
    out = eta * np.floor(theta / eta) + eta / 2.0
    return float(out) if out.ndim == 0 else out


def default_delta(eta: float, eps: float) -> float:
    """Smallest shrink radius we accept by default, strictly above ``eps + eta/2``."""
    return eps + eta / 2.0 + 1e-9


@dataclass
class AbstractionSpec:
    """Grid abstraction of one group.

    Attributes
    ----------
    eta, eps, delta : float
        Grid size, closeness bound and shrink radius (degC).
    cell0 : int
        Integer index of the first cell, so ``xi[k] = (cell0 + k + 0.5) * eta``.
    succ : (M, K) int array
        Successor grid index per mode.
    clamped : (M, K) bool array
        True where the exact successor left the domain and was clamped.
    safe : (K,) bool array
        Membership of each grid point in the safe index set.
    """

    eta: float
    eps: float
    delta: float
    cell0: int
    succ: np.ndarray
    clamped: np.ndarray
    safe: np.ndarray
    gid: int = 0

    @property
    def K(self) -> int:
        return self.succ.shape[1]

    @property
    def M(self) -> int:
        return self.succ.shape[0]

    @property
    def grid(self) -> np.ndarray:
        return (self.cell0 + np.arange(self.K) + 0.5) * self.eta

    @property
    def safe_indices(self) -> np.ndarray:
        return np.flatnonzero(self.safe)

    def index_of(self, theta) -> np.ndarray:
        """Grid index of the cell containing ``theta`` (clipped to the grid)."""
        c = np.floor(np.asarray(theta, dtype=float) / self.eta).astype(np.int64) - self.cell0
        return np.clip(c, 0, self.K - 1)

    def to_dict(self) -> dict:
        return {"gid": self.gid, "eta": self.eta, "eps": self.eps, "delta": self.delta,
                "cell0": int(self.cell0), "succ": self.succ.tolist(),
                "clamped": self.clamped.astype(int).tolist(),
                "safe": [int(k) for k in self.safe_indices]}

    @classmethod
    def from_dict(cls, d: dict) -> "AbstractionSpec":
        succ = np.asarray(d["succ"], dtype=np.int64)
        safe = np.zeros(succ.shape[1], dtype=bool)
        safe[np.asarray(d["safe"], dtype=np.int64)] = True
        return cls(eta=float(d["eta"]), eps=float(d["eps"]), delta=float(d["delta"]),
                   cell0=int(d["cell0"]), succ=succ,
                   clamped=np.asarray(d["clamped"], dtype=bool), safe=safe,
                   gid=int(d.get("gid", 0)))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "AbstractionSpec":
        return cls.from_dict(json.loads(text))


def _cell_range(lo: float, hi: float, eta: float) -> Tuple[int, int]:
    # cells meeting [lo, hi); an upper end exactly on a cell edge opens no new cell
    first = math.floor(lo / eta)
    last = math.ceil(hi / eta) - 1
    return first, max(first, last)


def grid_points(domain: Tuple[float, float], eta: float) -> np.ndarray:
    """Cell centres covering ``domain``, increasing."""
    first, last = _cell_range(domain[0], domain[1], eta)
    return (first + np.arange(last - first + 1) + 0.5) * eta


def build_abstraction(g: GroupDynamics, eta: float, eps: float,
                      delta: Optional[float] = None) -> AbstractionSpec:
    """Grid abstraction of ``g`` with successor table and safe index set.

    The safe set is the image under the abstraction map of the dead-band
    eroded by ``delta``, i.e. every cell that meets ``[T_lo + delta,
    T_hi - delta]``.

    Raises
    ------
    ValueError
        If the closeness condition fails or ``delta <= eps + eta / 2``.
    EmptySafeSetError
        If the eroded dead-band holds no grid point.
    """
    report = validate_bisimulation(g, eta, eps)
    if not report.ok:
        raise ValueError(f"eta={eta}, eps={eps} violate the closeness condition for modes "
                         f"{report.offending_modes}; need eps >= {report.min_eps:.6g}")
    if delta is None:
        delta = default_delta(eta, eps)
    if not delta > eps + eta / 2.0 + _INEQ_TOL:
        raise ValueError(f"delta={delta} must exceed eps + eta/2 = {eps + eta / 2.0}")

    first, last = _cell_range(g.domain[0], g.domain[1], eta)
    K = last - first + 1
    grid = (first + np.arange(K) + 0.5) * eta
    M = g.mode_count
    succ = np.empty((M, K), dtype=np.int64)
    clamped = np.zeros((M, K), dtype=bool)
    for m in range(M):
        nxt = step_dynamics(g, grid, np.full(K, m), warn=False)
        cells = np.floor(nxt / eta).astype(np.int64) - first
        clamped[m] = (cells < 0) | (cells >= K)
        succ[m] = np.clip(cells, 0, K - 1)

    lo = g.deadband[0] + delta
    hi = g.deadband[1] - delta
    safe = np.zeros(K, dtype=bool)
    if lo <= hi:
        c_lo = math.floor(lo / eta) - first
        c_hi = math.floor(hi / eta) - first
        safe[max(c_lo, 0):min(c_hi, K - 1) + 1] = True
    if not safe.any():
        raise EmptySafeSetError(f"group {g.gid}: no grid point in eroded band [{lo}, {hi}]")
    return AbstractionSpec(eta=eta, eps=eps, delta=delta, cell0=first, succ=succ,
                           clamped=clamped, safe=safe, gid=g.gid)


def safe_inclusion_exceptions(g: GroupDynamics, spec: AbstractionSpec) -> List[int]:
    """Safe grid points that fall outside the dead-band eroded by ``eps``.

    An empty list confirms the inclusion of the abstracted safe set in
    ``[T_lo + eps, T_hi - eps]``.
    """
    xi = spec.grid
    lo, hi = g.deadband[0] + spec.eps, g.deadband[1] - spec.eps
    return [int(k) for k in spec.safe_indices if not lo <= xi[k] <= hi]


def perturbation_budget(g: GroupDynamics, eta: float, eps: float) -> np.ndarray:
    """Largest per-mode model mismatch that keeps the closeness condition."""
    return np.maximum((1.0 - g.L) * eps - eta / 2.0, 0.0)


def random_mode_sequence(g: GroupDynamics, steps: int, rng: np.random.Generator,
                         mode0: int = OFF, tau0: int = 0, p_switch: float = 0.3) -> np.ndarray:
    """A random mode sequence that respects the lockout lengths."""
    modes = np.empty(steps, dtype=np.int64)
    m, tau = mode0, tau0
    for t in range(steps):
        if tau == 0 and rng.random() < p_switch:
            m = 1 - m
            tau = min(1, g.tau_bar[m])
        elif tau > 0:
            tau = tau + 1 if tau < g.tau_bar[m] else 0
        modes[t] = m
    return modes


def rollout(g: GroupDynamics, spec: AbstractionSpec, theta0: float, modes: Sequence[int],
            perturbation: Optional[Sequence[float]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Replay ``modes`` on the continuous model and on the successor table.

    Returns the continuous trajectory and the matching grid-point trajectory,
    both of length ``len(modes) + 1``.
    """
    n = len(modes)
    theta = np.empty(n + 1)
    k = np.empty(n + 1, dtype=np.int64)
    theta[0] = theta0
    k[0] = int(spec.index_of(theta0))
    for t, m in enumerate(modes):
        w = 0.0 if perturbation is None else perturbation[t]
        theta[t + 1] = step_dynamics(g, theta[t], m, perturbation=w, warn=False)
        k[t + 1] = spec.succ[m, k[t]]
    return theta, spec.grid[k]
