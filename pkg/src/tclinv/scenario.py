"""Scenario files: parsing, validation and canonical serialisation.

A scenario is a YAML mapping with the blocks ``groups``, ``abstraction``,
``bounds``, ``controller``, ``reference``, ``network`` and ``run``. Paths
inside the file are relative to the file itself; the feeder may also be
given as ``builtin:feeder12``. See ``scenarios/`` for complete examples.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import yaml

from .abstraction import GroupDynamics, build_abstraction, validate_bisimulation
from .control import KINDS

DERIVE = "derive-from-network"
BUILTIN_FEEDER = "builtin:feeder12"


class ScenarioError(ValueError):
    """Invalid scenario; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class GroupBlock:
    name: str
    C: float
    R: float
    p_tr: float
    T_a: float
    deadband: Tuple[float, float]
    domain: Tuple[float, float]
    N: int
    zeta: float = 1.0
    t_lock: Tuple[float, float] = (150.0, 30.0)


@dataclass
class Scenario:
    groups: List[GroupBlock]
    dt: float = 40.0
    eta: List[float] = field(default_factory=list)
    eps: float = 0.5
    delta: Optional[float] = None
    P_lo: float = 0.0
    P_hi: Union[float, str] = DERIVE
    kind: str = "InvSetMpc"
    horizon: int = 2
    max_nodes: int = 200
    max_seconds: float = 60.0
    n_cycles: List[int] = field(default_factory=list)
    max_cycle_length: int = 12
    switch_penalty: float = 1e-3
    reference: Dict[str, Any] = field(default_factory=dict)
    feeder: Optional[str] = BUILTIN_FEEDER
    v_min: float = 0.95
    recompute_bound: bool = False
    steps: int = 120
    seed: int = 0
    output: str = "out"
    base_dir: Path = field(default=Path("."), compare=False)

    # -- derived objects ------------------------------------------------
    def dynamics(self) -> List[GroupDynamics]:
        return [GroupDynamics.from_physical(C=g.C, R=g.R, p_tr=g.p_tr, T_a=g.T_a, dt=self.dt,
                                            t_lock=g.t_lock, deadband=g.deadband,
                                            domain=g.domain, N=g.N, zeta=g.zeta, gid=i)
                for i, g in enumerate(self.groups)]

    def abstractions(self, groups: Optional[Sequence[GroupDynamics]] = None):
        groups = self.dynamics() if groups is None else groups
        return [build_abstraction(g, eta, self.eps, self.delta)
                for g, eta in zip(groups, self.eta)]

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def feeder_path(self) -> Optional[Path]:
        if self.feeder is None:
            return None
        if self.feeder == BUILTIN_FEEDER:
            from .network import default_feeder_path
            return default_feeder_path()
        return self.resolve(self.feeder)

    @property
    def nominal_max_power(self) -> float:
        """Aggregate power with every subsystem on (kW)."""
        return sum(g.power * g.N for g in self.dynamics())

    # -- serialisation ----------------------------------------------------
    def to_dict(self) -> dict:
        """Canonical mapping; parsing it again gives an equal scenario."""
        return {
            "groups": [{"name": g.name, "C": g.C, "R": g.R, "p_tr": g.p_tr, "T_a": g.T_a,
                        "deadband": list(g.deadband), "domain": list(g.domain), "N": g.N,
                        "zeta": g.zeta, "t_lock": list(g.t_lock)} for g in self.groups],
            "dt": self.dt,
            "abstraction": {"eta": list(self.eta), "eps": self.eps, "delta": self.delta},
            "bounds": {"P_lo": self.P_lo, "P_hi": self.P_hi},
            "controller": {"kind": self.kind, "horizon": self.horizon,
                           "budget": {"max_nodes": self.max_nodes,
                                      "max_seconds": self.max_seconds},
                           "n_cycles": list(self.n_cycles),
                           "max_cycle_length": self.max_cycle_length,
                           "switch_penalty": self.switch_penalty},
            "reference": copy.deepcopy(self.reference),
            "network": {"feeder": self.feeder, "v_min": self.v_min,
                        "recompute_bound": self.recompute_bound},
            "run": {"steps": self.steps, "seed": self.seed, "output": self.output},
        }

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)


# -- parsing -----------------------------------------------------------------

def _get(block: dict, key: str, path: str, kind, default=None, required: bool = False):
    where = f"{path}.{key}" if path else key
    if key not in block or block[key] is None:
        if required:
            raise ScenarioError(where, "missing")
        return default
    value = block[key]
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is int:
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)
        return kind(value)
    except (TypeError, ValueError):
        raise ScenarioError(where, f"expected {kind.__name__}, got {value!r}") from None


def _pair(block: dict, key: str, path: str, default=None, required: bool = False):
    value = block.get(key, default)
    if value is None:
        if required:
            raise ScenarioError(f"{path}.{key}", "missing")
        return None
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError(f"{path}.{key}", "expected a pair [low, high]")
    try:
        lo, hi = float(value[0]), float(value[1])
    except (TypeError, ValueError):
        raise ScenarioError(f"{path}.{key}", "expected numbers") from None
    if lo >= hi:
        raise ScenarioError(f"{path}.{key}", "low must be below high")
    return (lo, hi)


def _block(raw: dict, key: str) -> dict:
    value = raw.get(key) or {}
    if not isinstance(value, dict):
        raise ScenarioError(key, "expected a mapping")
    return value


_KNOWN = {"groups", "dt", "abstraction", "bounds", "controller", "reference", "network", "run"}


def parse_scenario(raw: dict, base_dir: Union[str, Path] = ".") -> Scenario:
    """Build and validate a scenario from a parsed YAML mapping."""
    if not isinstance(raw, dict):
        raise ScenarioError("<root>", "expected a mapping")
    extra = set(raw) - _KNOWN
    if extra:
        raise ScenarioError(sorted(extra)[0], "unknown block")
    groups_raw = raw.get("groups")
    if not isinstance(groups_raw, list) or not groups_raw:
        raise ScenarioError("groups", "expected a non-empty list")
    groups = []
    for i, gr in enumerate(groups_raw):
        p = f"groups[{i}]"
        if not isinstance(gr, dict):
            raise ScenarioError(p, "expected a mapping")
        groups.append(GroupBlock(
            name=str(gr.get("name", f"group{i + 1}")),
            C=_get(gr, "C", p, float, required=True),
            R=_get(gr, "R", p, float, required=True),
            p_tr=_get(gr, "p_tr", p, float, required=True),
            T_a=_get(gr, "T_a", p, float, required=True),
            deadband=_pair(gr, "deadband", p, required=True),
            domain=_pair(gr, "domain", p, required=True),
            N=_get(gr, "N", p, int, required=True),
            zeta=_get(gr, "zeta", p, float, 1.0),
            t_lock=tuple(float(v) for v in gr.get("t_lock", (150.0, 30.0))),
        ))
        g = groups[-1]
        for name in ("C", "R", "p_tr", "zeta"):
            if getattr(g, name) <= 0:
                raise ScenarioError(f"{p}.{name}", "must be positive")
        if g.N < 1:
            raise ScenarioError(f"{p}.N", "must be at least 1")
        if not (g.domain[0] <= g.deadband[0] and g.deadband[1] <= g.domain[1]):
            raise ScenarioError(f"{p}.deadband", "must lie inside the domain")
        if len(g.t_lock) != 2 or min(g.t_lock) < 0:
            raise ScenarioError(f"{p}.t_lock", "expected two non-negative durations")

    ab = _block(raw, "abstraction")
    eta = ab.get("eta")
    if isinstance(eta, (int, float)):
        eta = [float(eta)] * len(groups)
    if not isinstance(eta, list) or len(eta) != len(groups):
        raise ScenarioError("abstraction.eta", "need one grid size per group")
    bounds = _block(raw, "bounds")
    P_hi = bounds.get("P_hi", DERIVE)
    if P_hi != DERIVE:
        P_hi = _get(bounds, "P_hi", "bounds", float)
    ctl = _block(raw, "controller")
    budget = ctl.get("budget") or {}
    n_cycles = ctl.get("n_cycles", 8)
    if isinstance(n_cycles, int):
        n_cycles = [n_cycles] * len(groups)
    net = _block(raw, "network")
    run = _block(raw, "run")
    sc = Scenario(
        groups=groups,
        dt=_get(raw, "dt", "", float, 40.0),
        eta=[float(e) for e in eta],
        eps=_get(ab, "eps", "abstraction", float, 0.5),
        delta=_get(ab, "delta", "abstraction", float, None),
        P_lo=_get(bounds, "P_lo", "bounds", float, 0.0),
        P_hi=P_hi,
        kind=_get(ctl, "kind", "controller", str, "InvSetMpc"),
        horizon=_get(ctl, "horizon", "controller", int, 2),
        max_nodes=_get(budget, "max_nodes", "controller.budget", int, 200),
        max_seconds=_get(budget, "max_seconds", "controller.budget", float, 60.0),
        n_cycles=[int(n) for n in n_cycles],
        max_cycle_length=_get(ctl, "max_cycle_length", "controller", int, 12),
        switch_penalty=_get(ctl, "switch_penalty", "controller", float, 1e-3),
        reference=dict(_block(raw, "reference")),
        feeder=net.get("feeder", BUILTIN_FEEDER),
        v_min=_get(net, "v_min", "network", float, 0.95),
        recompute_bound=_get(net, "recompute_bound", "network", bool, False),
        steps=_get(run, "steps", "run", int, 120),
        seed=_get(run, "seed", "run", int, 0),
        output=_get(run, "output", "run", str, "out"),
        base_dir=Path(base_dir),
    )
    validate(sc)
    return sc


def validate(sc: Scenario) -> None:
    """Cross-field checks; raises :class:`ScenarioError`."""
    if sc.dt <= 0:
        raise ScenarioError("dt", "must be positive")
    if sc.kind not in KINDS:
        raise ScenarioError("controller.kind", f"expected one of {', '.join(KINDS)}")
    if sc.horizon < 1:
        raise ScenarioError("controller.horizon", "must be at least 1")
    if sc.max_nodes < 1 or sc.max_seconds <= 0:
        raise ScenarioError("controller.budget", "limits must be positive")
    if len(sc.n_cycles) != len(sc.groups) or min(sc.n_cycles) < 1:
        raise ScenarioError("controller.n_cycles", "need a positive count per group")
    if sc.max_cycle_length < 1:
        raise ScenarioError("controller.max_cycle_length", "must be at least 1")
    if sc.steps < 1:
        raise ScenarioError("run.steps", "must be at least 1")
    if sc.P_lo < 0:
        raise ScenarioError("bounds.P_lo", "must be non-negative")
    if sc.P_hi == DERIVE:
        if sc.feeder is None:
            raise ScenarioError("bounds.P_hi", "deriving the bound needs network.feeder")
    elif sc.P_hi < sc.P_lo:
        raise ScenarioError("bounds.P_hi", "must not be below P_lo")
    if sc.eps <= 0:
        raise ScenarioError("abstraction.eps", "must be positive")
    groups = sc.dynamics()
    for i, (g, eta) in enumerate(zip(groups, sc.eta)):
        if eta <= 0:
            raise ScenarioError(f"abstraction.eta[{i}]", "must be positive")
        rep = validate_bisimulation(g, eta, sc.eps)
        if not rep.ok:
            raise ScenarioError(f"abstraction.eta[{i}]",
                                f"closeness fails: eps must be at least {rep.min_eps:.6g}")
        if sc.delta is not None and sc.delta <= sc.eps + eta / 2:
            raise ScenarioError("abstraction.delta",
                                f"must exceed eps + eta/2 = {sc.eps + eta / 2:.6g}")
    _validate_reference(sc)
    path = sc.feeder_path()
    if path is not None and not path.is_file():
        raise ScenarioError("network.feeder", f"file not found: {path}")


_GENERATORS = {"constant", "random-walk", "sine"}


def _validate_reference(sc: Scenario) -> None:
    ref = sc.reference
    if "csv" in ref:
        p = sc.resolve(str(ref["csv"]))
        if not p.is_file():
            raise ScenarioError("reference.csv", f"file not found: {p}")
        return
    kind = ref.get("generator", "random-walk")
    if kind not in _GENERATORS:
        raise ScenarioError("reference.generator", f"expected one of {sorted(_GENERATORS)}")
    band = ref.get("band")
    if band is not None:
        _pair(ref, "band", "reference")


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ScenarioError("<file>", f"not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError("<file>", f"invalid YAML: {exc}") from None
    return parse_scenario(raw, base_dir=path.resolve().parent)

