"""Compare the compiled simplex kernel with the numpy fallback.

Two workloads are timed with each kernel:

* random bounded LPs of growing size (one ``solve_lp`` each);
* one controller step of the desk-scale fleet (a full branch and bound).

Usage::

    python benchmarks/bench_simplex.py [--repeats 3] [--quick]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from tclinv.abstraction import build_abstraction
from tclinv.control import INV_SET_MPC, ControllerConfig, MpcProgram, build_artifacts
from tclinv.invariant import find_assignment, lift
from tclinv.milp import Budget, MilpModel, solve_lp, solve_milp
from tclinv.milp import kernels
from tclinv.presets import EPS, ETA, desk_groups


def random_lp(rng: np.random.Generator, m: int, n: int) -> MilpModel:
    model = MilpModel(n, sense="max")
    A = rng.uniform(-1.0, 1.0, size=(m, n))
    x0 = rng.uniform(0.0, 1.0, size=n)
    b = A @ x0 + rng.uniform(0.1, 1.0, size=m)
    model.objective[:] = rng.uniform(-1.0, 1.0, size=n)
    model.hi[:] = x0 + 2.0
    for i in range(m):
        model.add_constraint(A[i], "<=", float(b[i]))
    return model


def mpc_model(horizon: int = 2) -> MilpModel:
    groups = desk_groups()
    specs = [build_abstraction(g, e, EPS) for g, e in zip(groups, ETA)]
    maxp = sum(g.power * g.N for g in groups)
    art = build_artifacts(groups, specs, [0.3 * maxp, 0.0], [0.6 * maxp, 1e9], [8, 8])
    ca = find_assignment(art.cycles, art.safe, [g.N for g in groups], art.dims,
                         rng=np.random.default_rng(0))
    ref = np.full(horizon + 1, 0.45 * maxp)
    cfg = ControllerConfig(INV_SET_MPC, horizon=horizon, reference=ref)
    return MpcProgram(INV_SET_MPC, lift(ca), 0, cfg, art).model


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main(argv=None) -> list:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="small sizes only (smoke test)")
    args = ap.parse_args(argv)

    names = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    sizes = [(10, 15)] if args.quick else [(20, 30), (60, 80), (120, 160)]
    rng = np.random.default_rng(0)
    rows = []
    for m, n in sizes:
        model = random_lp(rng, m, n)
        t = {k: best_of(lambda: solve_lp(model, kernel=k), args.repeats) for k in names}
        rows.append((f"LP {m}x{n}", t))
    model = mpc_model(horizon=1 if args.quick else 2)
    budget = Budget(max_nodes=20 if args.quick else 200, max_seconds=600.0)
    t = {k: best_of(lambda: solve_milp(model, budget=budget, kernel=k), args.repeats)
         for k in names}
    rows.append((f"MPC step ({model.num_vars} vars, {len(model.constraints)} rows)", t))

    print(f"{'workload':<40}" + "".join(f"{k:>12}" for k in names) + f"{'speed-up':>10}")
    for label, t in rows:
        line = f"{label:<40}" + "".join(f"{t[k]:>11.4f}s" for k in names)
        if "cython" in t:
            line += f"{t['python'] / t['cython']:>9.1f}x"
        print(line)
    return rows


if __name__ == "__main__":
    main()
