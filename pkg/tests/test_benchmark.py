import importlib.util
from pathlib import Path

import pytest

from tclinv.milp import kernels

BENCH = Path(__file__).resolve().parent.parent / "benchmarks" / "bench_simplex.py"


def load_bench():
    spec = importlib.util.spec_from_file_location("bench_simplex", BENCH)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def test_benchmark_quick_run(capsys):
    rows = load_bench().main(["--quick", "--repeats", "1"])
    assert len(rows) == 2
    expected = {"python", "cython"} if kernels.BACKEND == "cython" else {"python"}
    assert all(set(t) == expected for _, t in rows)
    assert "speed-up" in capsys.readouterr().out


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernel not built")
def test_kernels_agree_on_benchmark_lps():
    import numpy as np
    from tclinv.milp import solve_lp

    bench = load_bench()
    rng = np.random.default_rng(5)
    for m, n in [(10, 15), (30, 40)]:
        model = bench.random_lp(rng, m, n)
        a = solve_lp(model, kernel="python")
        b = solve_lp(model, kernel="cython")
        assert a.status == b.status
        assert a.objective_value == pytest.approx(b.objective_value, abs=1e-8)
