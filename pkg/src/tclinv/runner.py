"""Scenario pipeline: abstraction, graphs, cycles, control loop and outputs.

Files written to the output directory, each CSV starting with a schema tag:

``trace.csv``
    one row per time step: controller status, objective, reference, fleet
    power, tracking cost, bounds and their slacks, B&B nodes, switches,
    on-mode counts per group and the lowest bus voltage;
``timing.csv``
    wall-clock solve time per step (kept apart so the other files are
    reproducible byte for byte);
``violations.csv``
    every monitor entry plus under-voltages;
``voltages.csv``
    bus voltage magnitudes per step (only with a feeder);
``summary.txt``
    RMSE, share of subsystems with lockout violations, aggregate-bound flag,
    mean solve time and a few counts, all recomputable from the CSVs.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .aggregate import SafeSetSpec, step_aggregate
from .control import (BENCHMARK3, ControlArtifacts, Controller, ControllerConfig, INV_SET_MPC,
                      build_artifacts)
from .fleet import (AggregateBoundViolation, ViolationLog, aggregate_power, disaggregate,
                    fleet_histogram, HistogramMismatchError, init_fleet, monitor, step_fleet)
from .invariant import CycleAssignment, NoSafeCycleError, find_assignment, lift
from .milp import Budget
from .network import NetworkModel, check_voltages, compute_safe_power_bound, load_feeder, solve_power_flow
from .reference import generate_reference
from .scenario import DERIVE, Scenario

OUTPUT_ROOT_ENV = "TCLINV_OUTPUT_ROOT"
# off-mode subsystems draw no power, so their row only needs a loose cap
OFF_CAP = 1e9

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SETUP = 2
EXIT_INFEASIBLE = 3


class SetupError(RuntimeError):
    """No safe cycle, empty invariant set or an infeasible first step."""


@dataclass
class Prepared:
    scenario: Scenario
    groups: list
    specs: list
    artifacts: ControlArtifacts
    network: Optional[NetworkModel]
    P_lo: float
    P_hi: float
    reference: np.ndarray
    initial: CycleAssignment


@dataclass
class RunResult:
    status: str
    exit_code: int
    steps_completed: int
    rmse: float
    lockout_pct: float
    bound_violated: bool
    mean_solve_time: float
    deadband_violations: int
    lockout_violations: int
    undervoltage_steps: int
    infeasible_at: Optional[int] = None
    out_dir: Optional[Path] = None
    trace: List[dict] = field(default_factory=list)
    log: ViolationLog = field(default_factory=ViolationLog)


def network_of(sc: Scenario) -> Optional[NetworkModel]:
    path = sc.feeder_path()
    if path is None:
        return None
    return load_feeder(path).with_v_min(sc.v_min)


def network_bound(sc: Scenario, net: Optional[NetworkModel] = None) -> float:
    net = network_of(sc) if net is None else net
    if net is None:
        raise SetupError("no feeder configured")
    return compute_safe_power_bound(net, sc.nominal_max_power, sc.v_min)


def prepare(sc: Scenario) -> Prepared:
    """Abstractions, graphs, cycles, bounds, reference and initial state."""
    groups = sc.dynamics()
    specs = sc.abstractions(groups)
    net = network_of(sc)
    P_hi = network_bound(sc, net) if sc.P_hi == DERIVE else float(sc.P_hi)
    if P_hi < sc.P_lo:
        raise SetupError(f"upper power bound {P_hi:.3f} kW is below the lower bound")
    try:
        art = build_artifacts(groups, specs, [sc.P_lo, 0.0], [P_hi, OFF_CAP],
                              sc.n_cycles, sc.max_cycle_length, lockout=sc.kind != BENCHMARK3)
    except NoSafeCycleError as exc:
        raise SetupError(str(exc)) from None
    ref = generate_reference(sc.reference, sc.steps + sc.horizon + 1, sc.base_dir)
    if ref.size < sc.steps + sc.horizon + 1:
        raise SetupError(f"reference has {ref.size} values, the run needs "
                         f"{sc.steps + sc.horizon + 1}")
    ca = find_assignment(art.cycles, art.safe, [g.N for g in groups], art.dims,
                         rng=np.random.default_rng(sc.seed))
    if ca is None:
        raise SetupError("the cycle-based invariant set is empty for these bounds")
    return Prepared(sc, groups, specs, art, net, sc.P_lo, P_hi, ref, ca)


def _write_csv(path: Path, tag: str, header: List[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {tag}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return "nan"
        return f"{float(v):.6f}"
    return str(v)


def output_dir(sc: Scenario, override: Optional[Path] = None) -> Path:
    if override is not None:
        return Path(override)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    base = Path(root) if root else sc.base_dir
    return base / sc.output


def run_scenario(sc: Scenario, out_dir: Optional[Path] = None, write: bool = True) -> RunResult:
    """Run the configured controller against the fleet and write the outputs."""
    prep = prepare(sc)
    art = prep.artifacts
    cfg = ControllerConfig(kind=sc.kind, horizon=sc.horizon, reference=prep.reference,
                           budget=Budget(sc.max_nodes, sc.max_seconds),
                           switch_penalty=sc.switch_penalty)
    ctl = Controller(cfg, art)
    graphs = art.graphs
    xs = lift(prep.initial)
    fleet = init_fleet(prep.groups, prep.specs, graphs, xs)
    rng = np.random.default_rng(sc.seed)
    log = ViolationLog()
    trace: List[dict] = []
    timing: List[Tuple[int, float]] = []
    volt_rows: List[Tuple[int, int, float]] = []
    under_rows = []
    P_hi = prep.P_hi
    net = prep.network
    weights = art.safe.weights
    status = "completed"
    exit_code = EXIT_OK
    infeasible_at = None

    for t in range(sc.steps + 1):
        if net is not None and sc.recompute_bound and sc.P_hi == DERIVE:
            P_hi = network_bound(sc, net)
        safe = SafeSetSpec(graphs, P_lo=[sc.P_lo, 0.0], P_hi=[P_hi, art.safe.P_hi[1]],
                           weights=weights)
        log.extend(monitor(fleet, safe))
        power = float(aggregate_power(fleet, weights)[0])
        v_low = float("nan")
        if net is not None:
            res = solve_power_flow(net, power)
            mag = res.magnitude
            v_low = float(mag.min())
            volt_rows.extend((t, b, float(v)) for b, v in enumerate(mag))
            under_rows.extend((t, "undervoltage", -1, b, -1, float(mag[b]), sc.v_min)
                              for b in check_voltages(res, sc.v_min))
        row = {"t": t, "status": "-", "objective": float("nan"),
               "reference": float(prep.reference[t]), "power": power,
               "cost": abs(power - prep.reference[t]), "p_lo": sc.P_lo, "p_hi": P_hi,
               "slack_lo": power - sc.P_lo, "slack_hi": P_hi - power, "nodes": 0,
               "switches": 0, "v_low": v_low}
        for i, n_on in enumerate(fleet.on_counts()):
            row[f"on_{i + 1}"] = int(n_on)
        trace.append(row)
        if t == sc.steps:
            break
        res_step = ctl.step(t, xs, witness=prep.initial if t == 0 else None)
        row["status"] = res_step.status.value
        row["nodes"] = res_step.nodes
        timing.append((t, res_step.solve_time))
        if not res_step.feasible:
            infeasible_at = t
            if t == 0 and sc.kind == INV_SET_MPC:
                raise SetupError(f"initial-infeasible: first controller step returned "
                                 f"{res_step.status.value}")
            status = f"infeasible at step {t} ({res_step.status.value})"
            exit_code = EXIT_INFEASIBLE
            break
        row["objective"] = res_step.objective
        row["switches"] = int(sum(int(u.sum()) for u in res_step.inputs))
        commands = disaggregate(xs, res_step.inputs, fleet, graphs, rng)
        fleet = step_fleet(fleet, commands, allow_locked=sc.kind == BENCHMARK3)
        xs = [step_aggregate(G, x, u, m) for G, x, u, m in
              zip(graphs, xs, res_step.inputs, art.matrices)]
        hist = fleet_histogram(fleet, graphs)
        if any(not np.array_equal(a, b) for a, b in zip(hist, xs)):
            raise HistogramMismatchError(f"fleet and aggregate state diverged at step {t + 1}")

    result = summarise(sc, trace, timing, log, under_rows, status, exit_code, infeasible_at)
    if write:
        out = output_dir(sc, out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.out_dir = out
        write_outputs(out, sc, result, trace, timing, log, under_rows, volt_rows)
    return result


def summarise(sc, trace, timing, log, under_rows, status, exit_code, infeasible_at) -> RunResult:
    gaps = np.array([r["power"] - r["reference"] for r in trace])
    total_units = sum(g.N for g in sc.groups)
    lock_units = log.units_with("lockout")
    times = [s for _, s in timing]
    return RunResult(
        status=status, exit_code=exit_code, steps_completed=len(timing) - (infeasible_at is not None),
        rmse=float(np.sqrt(np.mean(gaps ** 2))) if gaps.size else float("nan"),
        lockout_pct=100.0 * len(lock_units) / total_units,
        bound_violated=any(isinstance(e, AggregateBoundViolation) for e in log.entries),
        mean_solve_time=float(np.mean(times)) if times else float("nan"),
        deadband_violations=log.count("deadband"), lockout_violations=log.count("lockout"),
        undervoltage_steps=len({r[0] for r in under_rows}), infeasible_at=infeasible_at,
        trace=trace, log=log)


def write_outputs(out: Path, sc: Scenario, result: RunResult, trace, timing, log, under_rows,
                  volt_rows) -> None:
    header = list(trace[0].keys())
    _write_csv(out / "trace.csv", "tclinv.trace/1", header, ([r[k] for k in header] for r in trace))
    _write_csv(out / "timing.csv", "tclinv.timing/1", ["t", "solve_time"], timing)
    rows = sorted(log.rows() + under_rows, key=lambda r: (r[0], r[1], r[2], r[3]))
    _write_csv(out / "violations.csv", "tclinv.violations/1",
               ["t", "kind", "group", "unit", "mode", "value", "bound"], rows)
    if volt_rows:
        _write_csv(out / "voltages.csv", "tclinv.voltages/1", ["t", "bus", "voltage"], volt_rows)
    lines = [
        "schema: tclinv.summary/1",
        f"controller: {sc.kind}",
        f"status: {result.status}",
        f"steps_completed: {result.steps_completed}",
        f"rmse_kw: {result.rmse:.6f}",
        f"lockout_violation_pct: {result.lockout_pct:.6f}",
        f"aggregate_bound_violated: {'yes' if result.bound_violated else 'no'}",
        f"mean_solve_time_s: {result.mean_solve_time:.6f}",
        f"deadband_violations: {result.deadband_violations}",
        f"lockout_violations: {result.lockout_violations}",
        f"undervoltage_steps: {result.undervoltage_steps}",
        f"p_lo_kw: {sc.P_lo:.6f}",
        f"p_hi_kw: {trace[0]['p_hi']:.6f}",
    ]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")


def cycles_report(sc: Scenario) -> str:
    """JSON listing of the selected cycles with node labels."""
    prep = prepare(sc)
    art = prep.artifacts
    doc = []
    for G, cs in zip(art.graphs, art.cycles):
        doc.append({"group": G.gid, "tau_bar": list(G.tau_bar),
                    "cycles": [{"nodes": [list(G.label(n)) for n in c.nodes],
                                "modes": list(c.modes),
                                "profile": list(c.mode_profile(G.M))} for c in cs]})
    return json.dumps(doc, indent=1)
