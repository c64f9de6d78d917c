"""The ten primary acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line (also repeated in the
terminal summary) before asserting.
"""

import dataclasses
import itertools
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import brentq

from conftest import ACCEPTANCE
from helpers import fleet_matches_aggregate
from tclinv.abstraction import build_abstraction, random_mode_sequence, rollout, safe_inclusion_exceptions
from tclinv.milp import MilpModel, Status, solve_lp, solve_milp
from tclinv.network import (NetworkModel, compute_safe_power_bound, default_feeder_path, load_feeder,
                            losses, slack_injection, solve_power_flow, two_bus_voltage)
from tclinv.presets import EPS, ETA, desk_groups
from tclinv.runner import run_scenario
from tclinv.scenario import load_scenario
from test_invariant import run_membership_case, run_shift_case

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def verdict(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    print(line)
    ACCEPTANCE.append(line)
    assert ok, line


# 1 -------------------------------------------------------------------------------

def test_bisimulation_closeness():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst, rollouts = 0.0, 0
    for g, eta in zip(desk_groups(), ETA):
        spec = build_abstraction(g, eta, EPS)
        lo, hi = g.domain
        for _ in range(500):
            theta0 = rng.uniform(lo + 1.0, hi - 1.0)
            modes = random_mode_sequence(g, 50, rng, mode0=int(rng.integers(2)))
            theta, xi = rollout(g, spec, theta0, modes)
            worst = max(worst, float(np.max(np.abs(theta - xi))))
            rollouts += 1
    elapsed = time.perf_counter() - start
    verdict("bisimulation closeness", worst <= EPS and elapsed < 5.0,
            f"{rollouts} rollouts, max |theta - xi| = {worst:.4f} <= {EPS}, {elapsed:.2f} s")


# 2 -------------------------------------------------------------------------------

def test_eroded_safe_set_inclusion():
    exceptions = 0
    for g, eta in zip(desk_groups(), ETA):
        exceptions += len(safe_inclusion_exceptions(g, build_abstraction(g, eta, EPS)))
    verdict("eroded safe-set inclusion", exceptions == 0, f"{exceptions} exceptions")


# 3 -------------------------------------------------------------------------------

def test_aggregate_fleet_equivalence():
    bad = [seed for seed in range(200) if not fleet_matches_aggregate(seed, steps=30)]
    verdict("aggregate/fleet equivalence", not bad,
            f"200 trials x 30 steps, {len(bad)} mismatches")


# 4 -------------------------------------------------------------------------------

def test_circular_shift_invariance():
    start = time.perf_counter()
    checked, counterexamples = 0, 0
    for seed in range(200):
        ok, cex = run_shift_case(seed)
        if ok:
            checked += 1
            counterexamples += cex is not None
    elapsed = time.perf_counter() - start
    verdict("circular-shift invariance", counterexamples == 0 and checked > 0 and elapsed < 10.0,
            f"{checked}/200 instances pass the Omega check, {counterexamples} counterexamples, "
            f"{elapsed:.2f} s")


# 5 -------------------------------------------------------------------------------

def test_membership_matches_brute_force():
    mismatches = [seed for seed in range(200) if len(set(run_membership_case(seed))) != 1]
    verdict("X_inv membership vs enumeration", not mismatches,
            f"200 instances, {len(mismatches)} mismatches")


# 6 -------------------------------------------------------------------------------

def test_recursive_feasibility():
    base = load_scenario(SCENARIOS / "experiment2.yaml")
    maxp = base.nominal_max_power
    rng = np.random.default_rng(6)
    failures = []
    for seed in range(20):
        lo = float(rng.uniform(0.2, 0.35)) * maxp
        band = sorted(rng.uniform(0.1, 0.9, size=2) * maxp)
        sc = dataclasses.replace(base, P_lo=lo, P_hi=0.6 * maxp, feeder=None, steps=100, seed=seed,
                                 reference={"generator": "random-walk", "band": band,
                                            "seed": 100 + seed, "hold": int(rng.integers(1, 6))})
        res = run_scenario(sc, write=False)
        if res.status != "completed" or len(res.log):
            failures.append((seed, res.status, len(res.log)))
    verdict("recursive feasibility", not failures,
            f"20 scenarios x 100 steps at P_hi = 60% of max, failures: {failures or 'none'}")


# 7 -------------------------------------------------------------------------------

def test_experiment1_phenomenology():
    b1 = run_scenario(load_scenario(SCENARIOS / "experiment1-benchmark1.yaml"), write=False)
    inv = run_scenario(load_scenario(SCENARIOS / "experiment1.yaml"), write=False)
    ok = (b1.infeasible_at is not None and inv.status == "completed" and len(inv.log) == 0)
    verdict("Experiment-1 phenomenology", ok,
            f"Benchmark1 {b1.status}; InvSetMpc {inv.status} with {len(inv.log)} violations")


# 8 -------------------------------------------------------------------------------

def test_experiment2_phenomenology():
    res = {name: run_scenario(load_scenario(SCENARIOS / f"{name}.yaml"), write=False)
           for name in ("experiment2", "experiment2-benchmark2", "experiment2-benchmark3")}
    inv, b2, b3 = res["experiment2"], res["experiment2-benchmark2"], res["experiment2-benchmark3"]
    bound_b2 = b2.log.count("aggregate-bound")
    ok = (bound_b2 >= 1 and b2.undervoltage_steps >= 1 and b3.lockout_violations >= 1
          and inv.log.count("aggregate-bound") == 0 and inv.lockout_violations == 0
          and inv.undervoltage_steps == 0 and inv.status == "completed")
    verdict("Experiment-2 phenomenology", ok,
            f"Benchmark2 {bound_b2} bound / {b2.undervoltage_steps} under-voltage steps; "
            f"Benchmark3 {b3.lockout_violations} lockout ({b3.lockout_pct:.1f}% of units); "
            f"InvSetMpc {inv.log.count('aggregate-bound')} bound / {inv.lockout_violations} lockout "
            f"/ {inv.undervoltage_steps} under-voltage")


# 9 -------------------------------------------------------------------------------

def _random_ip(rng, n):
    m = MilpModel(n, sense=str(rng.choice(["min", "max"])))
    m.objective[:] = rng.integers(-5, 6, size=n)
    m.hi[:] = 4.0
    m.integrality[:] = True
    for _ in range(int(rng.integers(1, 5))):
        m.add_constraint(rng.integers(-4, 5, size=n).astype(float),
                         str(rng.choice(["<=", ">=", "=="], p=[0.5, 0.35, 0.15])),
                         float(rng.integers(-4, 13)))
    return m


def _enumerate(model):
    best = None
    for pt in itertools.product(range(5), repeat=model.num_vars):
        x = np.array(pt, dtype=float)
        if model.max_violation(x) <= 1e-9:
            v = model.evaluate(x)
            if best is None or (v < best if model.sense == "min" else v > best):
                best = v
    return best


def _lp_gap(rng):
    n, k = int(rng.integers(1, 9)), int(rng.integers(1, 9))
    A = rng.integers(-5, 6, size=(k, n)).astype(float)
    x0 = rng.uniform(0, 3, size=n)
    b = A @ x0 + rng.uniform(0, 2, size=k)
    c = rng.integers(-6, 7, size=n).astype(float)
    u = x0 + rng.uniform(0.5, 3, size=n)
    primal = MilpModel(n, sense="max")
    primal.objective[:] = c
    primal.hi[:] = u
    for i in range(k):
        primal.add_constraint(A[i], "<=", b[i])
    dual = MilpModel(k + n, sense="min")
    dual.objective[:] = np.concatenate([b, u])
    for j in range(n):
        dual.add_constraint(np.concatenate([A[:, j], np.eye(n)[j]]), ">=", c[j])
    p, d = solve_lp(primal), solve_lp(dual)
    if p.status != Status.OPTIMAL or d.status != Status.OPTIMAL:
        return float("inf")
    return abs(p.objective_value - d.objective_value)


def test_milp_core():
    rng = np.random.default_rng(99)
    wrong = 0
    for _ in range(500):
        model = _random_ip(rng, int(rng.integers(1, 7)))
        expected = _enumerate(model)
        sol = solve_milp(model)
        if expected is None:
            wrong += sol.status != Status.INFEASIBLE
        else:
            wrong += not (sol.status == Status.OPTIMAL and sol.objective_value == expected)
    gap = max(_lp_gap(rng) for _ in range(200))
    verdict("MILP core", wrong == 0 and gap <= 1e-6,
            f"500 integer programs, {wrong} disagreements with enumeration; "
            f"max LP primal-dual gap {gap:.2e} over 200 LPs")


# 10 ------------------------------------------------------------------------------

def test_power_flow():
    rng = np.random.default_rng(10)
    err2 = 0.0
    for _ in range(100):
        r, x = rng.uniform(0.002, 0.04, size=2)
        P = float(rng.uniform(0, 150))
        net = NetworkModel(parent=[-1, 0], r=[0, r], x=[0, x], p_load=[0, 0], q_load=[0, 0],
                           tcl_weight=[0, 1], tcl_pf=1.0)
        err2 = max(err2, abs(solve_power_flow(net, P).magnitude[1]
                             - two_bus_voltage(1.0, r, x, P / 100, 0.0)))
    feeder = load_feeder(default_feeder_path())
    resid = 0.0
    for P in np.linspace(0, 40, 9):
        res = solve_power_flow(feeder, P)
        resid = max(resid, abs(slack_injection(feeder, res) - feeder.injections(P).sum()
                               - losses(feeder, res)))
    limit = brentq(lambda P: solve_power_flow(feeder, P).magnitude.min() - 0.95, 0, 100,
                   xtol=1e-10)
    bound = compute_safe_power_bound(feeder, 41.6)
    slack = limit - bound
    ok = err2 <= 1e-6 and resid <= 1e-6 and 0 <= slack <= 0.2
    verdict("power flow", ok, f"2-bus error {err2:.1e} p.u., conservation residual {resid:.1e}, "
            f"bound {bound:.3f} kW is {slack:.3f} kW below the limit")
