import io
import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from tclinv.milp import (BudgetExhausted, Budget, MilpModel, ModelError, Status, check_feasible,
                         solve_lp, solve_milp, write_mps)
from tclinv.milp import kernels
from tclinv.milp.simplex import reduced_costs_ok

KERNELS = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])


def lp(n, sense="min"):
    return MilpModel(n, sense)


@pytest.fixture(params=KERNELS)
def kernel(request):
    return request.param


# -- solve_lp examples ----------------------------------------------------

def test_single_variable_bound(kernel):
    m = lp(1, "max")
    m.objective[:] = [1.0]
    m.add_constraint([1.0], "<=", 1.0)
    sol = solve_lp(m, kernel=kernel)
    assert sol.status == Status.OPTIMAL
    assert sol.values[0] == pytest.approx(1.0)
    assert sol.objective_value == pytest.approx(1.0)


def test_binding_single_constraint(kernel):
    m = lp(2, "max")
    m.objective[:] = [1.0, 1.0]
    m.hi[:] = 1.0
    m.add_constraint([1.0, 1.0], "<=", 1.5)
    sol = solve_lp(m, kernel=kernel)
    assert sol.objective_value == pytest.approx(1.5)


def test_contradictory_rows_infeasible(kernel):
    m = lp(1)
    m.lo[:] = -1e9
    m.add_constraint([1.0], ">=", 2.0)
    m.add_constraint([1.0], "<=", 1.0)
    assert solve_lp(m, kernel=kernel).status == Status.INFEASIBLE


def test_unbounded(kernel):
    m = lp(2, "max")
    m.objective[:] = [1.0, 0.0]
    m.add_constraint([1.0, -1.0], "<=", 1.0)
    assert solve_lp(m, kernel=kernel).status == Status.UNBOUNDED


def test_free_variable_and_equality(kernel):
    # min x + 2y  s.t.  x - y == -3, y <= 5, x free
    m = lp(2)
    m.objective[:] = [1.0, 2.0]
    m.set_bounds(0, -1e9, 1e9)
    m.set_bounds(1, 0.0, 5.0)
    m.add_constraint([1.0, -1.0], "==", -3.0)
    sol = solve_lp(m, kernel=kernel)
    assert sol.status == Status.OPTIMAL
    assert sol.values == pytest.approx([-3.0, 0.0])


def test_model_invariants_enforced():
    m = lp(2)
    with pytest.raises(ModelError):
        m.add_constraint([1.0], "<=", 1.0)
    m.lo[0], m.hi[0] = 2.0, 1.0
    with pytest.raises(ModelError):
        m.validate()
    with pytest.raises(ModelError):
        m.add_constraint({0: 1.0}, "!=", 1.0)


# -- random LPs: optimum vs HiGHS, strong duality vs explicit dual --------

def random_bounded_lp(rng, n, k):
    A = rng.integers(-5, 6, size=(k, n)).astype(float)
    x0 = rng.uniform(0, 3, size=n)
    b = A @ x0 + rng.uniform(0, 2, size=k)  # x0 strictly feasible
    c = rng.integers(-6, 7, size=n).astype(float)
    u = x0 + rng.uniform(0.5, 3, size=n)
    return A, b, c, u


def primal_model(A, b, c, u):
    k, n = A.shape
    m = lp(n, "max")
    m.objective[:] = c
    m.hi[:] = u
    for i in range(k):
        m.add_constraint(A[i], "<=", b[i])
    return m


def dual_model(A, b, c, u):
    # max c x, Ax <= b, 0 <= x <= u   <->   min b y + u w,  A'y + w >= c,  y, w >= 0
    k, n = A.shape
    m = lp(k + n, "min")
    m.objective[:] = np.concatenate([b, u])
    for j in range(n):
        row = np.concatenate([A[:, j], np.eye(n)[j]])
        m.add_constraint(row, ">=", c[j])
    return m


def test_lp_duality_and_reference_optimum(kernel):
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(1, 9))
        k = int(rng.integers(1, 9))
        A, b, c, u = random_bounded_lp(rng, n, k)
        primal = solve_lp(primal_model(A, b, c, u), kernel=kernel, with_duals=True)
        dual = solve_lp(dual_model(A, b, c, u), kernel=kernel)
        ref = linprog(-c, A_ub=A, b_ub=b, bounds=list(zip(np.zeros(n), u)), method="highs")
        assert primal.status == Status.OPTIMAL and dual.status == Status.OPTIMAL
        assert abs(primal.objective_value - dual.objective_value) <= 1e-6
        assert abs(primal.objective_value - (-ref.fun)) <= 1e-6
        assert reduced_costs_ok(primal_model(A, b, c, u), primal)


# -- MILP examples --------------------------------------------------------

def test_binary_knapsack_example(kernel):
    m = lp(2, "max")
    m.objective[:] = [1.0, 1.0]
    m.hi[:] = 1.0
    m.integrality[:] = True
    m.add_constraint([1.0, 1.0], "<=", 1.5)
    # enumeration over {0,1}^2
    best = max(x + y for x, y in itertools.product([0, 1], repeat=2) if x + y <= 1.5)
    sol = solve_milp(m, kernel=kernel)
    assert sol.status == Status.OPTIMAL
    assert sol.objective_value == pytest.approx(best) == 1.0


def test_integer_example_from_enumeration(kernel):
    m = lp(2, "max")
    m.objective[:] = [5.0, 4.0]
    m.integrality[:] = True
    m.add_constraint([6.0, 4.0], "<=", 9.0)
    pts = [(a, b) for a in range(2) for b in range(3) if 6 * a + 4 * b <= 9]
    best = max(pts, key=lambda p: 5 * p[0] + 4 * p[1])
    sol = solve_milp(m, kernel=kernel)
    assert sol.objective_value == pytest.approx(8.0)
    assert tuple(sol.values) == best == (0, 2)


def test_no_integers_matches_lp(kernel):
    m = lp(2, "max")
    m.objective[:] = [1.0, 1.0]
    m.hi[:] = 1.0
    m.add_constraint([1.0, 1.0], "<=", 1.5)
    a, b = solve_lp(m, kernel=kernel), solve_milp(m, kernel=kernel)
    assert a.status == b.status
    assert a.objective_value == pytest.approx(b.objective_value)


def random_ip(rng, n):
    m = lp(n, rng.choice(["min", "max"]))
    m.objective[:] = rng.integers(-5, 6, size=n)
    m.hi[:] = 4.0
    m.integrality[:] = True
    for _ in range(int(rng.integers(1, 5))):
        row = rng.integers(-4, 5, size=n).astype(float)
        rel = rng.choice(["<=", ">=", "=="], p=[0.5, 0.35, 0.15])
        rhs = float(rng.integers(-4, 13))
        m.add_constraint(row, rel, rhs)
    return m


def brute_force(model):
    n = model.num_vars
    best = None
    for pt in itertools.product(range(5), repeat=n):
        x = np.array(pt, dtype=float)
        if model.max_violation(x) > 1e-9:
            continue
        v = model.evaluate(x)
        if best is None or (v < best if model.sense == "min" else v > best):
            best = v
    return best


def test_milp_matches_enumeration(kernel):
    rng = np.random.default_rng(11)
    for _ in range(120):
        n = int(rng.integers(1, 5))
        model = random_ip(rng, n)
        expected = brute_force(model)
        sol = solve_milp(model, kernel=kernel)
        if expected is None:
            assert sol.status == Status.INFEASIBLE
        else:
            assert sol.status == Status.OPTIMAL
            assert sol.objective_value == expected
            assert model.is_feasible(sol.values)


def test_determinism():
    rng = np.random.default_rng(3)
    model = random_ip(rng, 5)
    runs = [solve_milp(model) for _ in range(3)]
    assert len({(r.status, r.objective_value, tuple(r.values)) for r in runs}) == 1


def test_solution_invariants_hold():
    rng = np.random.default_rng(5)
    for _ in range(30):
        model = random_ip(rng, 4)
        sol = solve_milp(model)
        if sol.ok:
            xi = sol.values[model.integrality]
            assert np.all(np.abs(xi - np.round(xi)) <= 1e-6)
            assert model.max_violation(sol.values) <= 1e-6


def test_budget_statuses():
    # a problem needing many nodes: sum of halves
    n = 6
    m = lp(n, "max")
    m.objective[:] = np.arange(1, n + 1)
    m.integrality[:] = True
    m.hi[:] = 4.0
    m.add_constraint(2.0 * np.ones(n), "==", 2 * 7 + 1)  # infeasible parity, LP feasible
    sol = solve_milp(m, budget=Budget(max_nodes=3))
    assert sol.status == Status.BUDGET_EXHAUSTED
    with pytest.raises(BudgetExhausted):
        check_feasible(m, budget=Budget(max_nodes=3))
    assert solve_milp(m).status == Status.INFEASIBLE

    m2 = lp(n, "max")
    m2.objective[:] = np.arange(1, n + 1)
    m2.integrality[:] = True
    m2.hi[:] = 4.0
    m2.add_constraint(np.arange(3, n + 3), "<=", 20.5)
    incumbent = np.zeros(n)
    sol = solve_milp(m2, budget=Budget(max_nodes=1), incumbent=incumbent)
    assert sol.status == Status.TIME_LIMIT_SUBOPTIMAL
    assert m2.is_feasible(sol.values)


def test_infeasible_incumbent_is_ignored():
    m = lp(1, "max")
    m.objective[:] = [1.0]
    m.integrality[:] = True
    m.add_constraint([1.0], "<=", 2.0)
    sol = solve_milp(m, incumbent=np.array([7.0]))
    assert sol.status == Status.OPTIMAL and sol.values[0] == 2.0


# -- check_feasible examples ---------------------------------------------

def test_feasible_empty_constraints():
    m = lp(1)
    m.hi[:] = 3.0
    m.integrality[:] = True
    ok, w = check_feasible(m)
    assert ok and w[0] in (0.0, 1.0, 2.0, 3.0)


def test_no_integer_in_open_band():
    m = lp(1)
    m.set_bounds(0, 0.2, 0.8)
    m.integrality[:] = True
    assert check_feasible(m) == (False, None)


def test_partition_exists():
    m = lp(2)
    m.integrality[:] = True
    m.add_constraint([1.0, 1.0], "==", 3.0)
    ok, w = check_feasible(m)
    assert ok and w.sum() == 3.0 and np.all(w >= 0)


# -- MPS dump -------------------------------------------------------------

def test_mps_fixed_columns():
    m = lp(2, "max")
    m.objective[:] = [5.0, 4.0]
    m.integrality[1] = True
    m.hi[0] = 3.0
    m.add_constraint([6.0, 4.0], "<=", 9.0)
    buf = io.StringIO()
    write_mps(m, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith("NAME")
    assert " L  R0" in lines
    col_line = next(line for line in lines if line.startswith("    C0") and "R0" in line)
    assert col_line[4:6] == "C0"          # field 2 starts at column 5
    assert col_line[14:16] == "R0"        # field 3 starts at column 15
    assert col_line[24:36].strip() == "6"  # field 4 spans columns 25-36
    assert any("'INTORG'" in line for line in lines)
    assert lines[-1] == "ENDATA"
    assert " UP BND       C0                   3" in lines
