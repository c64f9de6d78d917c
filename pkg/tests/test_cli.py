import csv
import json
import math
import shutil
from pathlib import Path

import numpy as np
import pytest
import yaml

from tclinv.cli import main
from tclinv.reference import generate_reference, random_walk, sine
from tclinv.runner import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, EXIT_SETUP, OUTPUT_ROOT_ENV
from tclinv.scenario import ScenarioError, load_scenario, parse_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def read_csv(path):
    with open(path) as fh:
        tag = fh.readline().strip()
        rows = list(csv.DictReader(fh))
    return tag, rows


def read_summary(path):
    return dict(line.split(": ", 1) for line in Path(path).read_text().splitlines())


@pytest.fixture
def minimal(tmp_path):
    dst = tmp_path / "minimal.yaml"
    shutil.copy(SCENARIOS / "minimal.yaml", dst)
    return dst


def raw_minimal():
    return yaml.safe_load((SCENARIOS / "minimal.yaml").read_text())


# -- scenario parsing ------------------------------------------------------------

def test_shipped_scenarios_validate(capsys):
    for path in sorted(SCENARIOS.glob("*.yaml")):
        assert main(["validate", str(path)]) == EXIT_OK, path
    assert "ok:" in capsys.readouterr().out


def test_round_trip_is_canonical(tmp_path):
    for path in sorted(SCENARIOS.glob("*.yaml")):
        sc = load_scenario(path)
        again = parse_scenario(yaml.safe_load(sc.dumps()), base_dir=sc.base_dir)
        assert again == sc
        assert again.dumps() == sc.dumps()


@pytest.mark.parametrize("edit, where", [
    (lambda r: r["groups"][0].pop("C"), "groups[0].C"),
    (lambda r: r["groups"][0].update(N=0), "groups[0].N"),
    (lambda r: r["groups"][0].update(deadband=[25, 21]), "groups[0].deadband"),
    (lambda r: r["controller"].update(kind="Greedy"), "controller.kind"),
    (lambda r: r["controller"].update(horizon=0), "controller.horizon"),
    (lambda r: r["controller"]["budget"].update(max_nodes="many"), "controller.budget.max_nodes"),
    (lambda r: r["abstraction"].update(eta=[0.045, 0.1]), "abstraction.eta"),
    (lambda r: r["abstraction"].update(eps=0.01), "abstraction.eta[0]"),
    (lambda r: r["abstraction"].update(delta=0.3), "abstraction.delta"),
    (lambda r: r["bounds"].update(P_hi=-1.0), "bounds.P_hi"),
    (lambda r: r["bounds"].update(P_hi="derive-from-network"), "bounds.P_hi"),
    (lambda r: r.update(reference={"csv": "missing.csv"}), "reference.csv"),
    (lambda r: r.update(reference={"generator": "chirp"}), "reference.generator"),
    (lambda r: r.update(network={"feeder": "nowhere.txt"}), "network.feeder"),
    (lambda r: r.update(extra={}), "extra"),
    (lambda r: r.update(dt=-1), "dt"),
])
def test_invalid_fields_name_their_path(edit, where):
    raw = raw_minimal()
    edit(raw)
    with pytest.raises(ScenarioError) as err:
        parse_scenario(raw, base_dir=SCENARIOS)
    assert err.value.path == where


def test_invalid_scenario_exit_code(tmp_path, capsys):
    raw = raw_minimal()
    raw["controller"]["kind"] = "Greedy"
    p = tmp_path / "bad.yaml"
    p.write_text(yaml.safe_dump(raw))
    assert main(["run", str(p)]) == EXIT_CONFIG
    assert "controller.kind" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "absent.yaml")]) == EXIT_CONFIG


# -- reference signals -----------------------------------------------------------

def test_constant_reference():
    assert generate_reference({"generator": "constant", "value": 7.5}, 4).tolist() == [7.5] * 4


def test_random_walk_is_seeded_and_clamped():
    a = random_walk(200, (2.0, 6.0), seed=4, hold=3)
    assert np.array_equal(a, random_walk(200, (2.0, 6.0), seed=4, hold=3))
    assert not np.array_equal(a, random_walk(200, (2.0, 6.0), seed=5, hold=3))
    assert a.min() >= 2.0 and a.max() <= 6.0
    assert all(len(set(a[i:i + 3])) == 1 for i in range(0, 198, 3))


def test_sine_reference_stays_in_band():
    s = sine(100, (1.0, 3.0), period=20)
    assert s.min() >= 1.0 - 1e-12 and s.max() <= 3.0 + 1e-12
    assert np.allclose(s[:20], s[20:40])


def test_csv_reference_verbatim(tmp_path):
    (tmp_path / "r.csv").write_text("kw\n1.5\n2.25\n-0.5\n")
    out = generate_reference({"csv": "r.csv", "column": "kw"}, 99, tmp_path)
    assert out.tolist() == [1.5, 2.25, -0.5]
    scaled = generate_reference({"csv": "r.csv", "column": 0, "shift": 10, "scale": 2}, 99, tmp_path)
    assert scaled.tolist() == [13.0, 14.5, 9.0]


# -- running -----------------------------------------------------------------------

def test_minimal_run(minimal, tmp_path):
    out = tmp_path / "o"
    assert main(["run", str(minimal), "-o", str(out)]) == EXIT_OK
    tag, trace = read_csv(out / "trace.csv")
    assert tag == "# schema: tclinv.trace/1"
    assert len(trace) == 21
    _, viol = read_csv(out / "violations.csv")
    assert viol == []
    summ = read_summary(out / "summary.txt")
    assert summ["status"] == "completed"
    assert math.isfinite(float(summ["rmse_kw"]))
    assert not (out / "voltages.csv").exists()


def test_runs_are_byte_identical(minimal, tmp_path):
    for name in ("a", "b"):
        assert main(["run", str(minimal), "-o", str(tmp_path / name)]) == EXIT_OK
    for f in ("trace.csv", "violations.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_output_root_env(minimal, tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    assert main(["run", str(minimal), "--steps", "3"]) == EXIT_OK
    assert (tmp_path / "root" / "out" / "minimal" / "summary.txt").is_file()


def test_summary_recomputable_from_csvs(tmp_path):
    sc = SCENARIOS / "experiment2-benchmark2.yaml"
    out = tmp_path / "b2"
    assert main(["run", str(sc), "-o", str(out), "--steps", "80"]) == EXIT_OK
    _, trace = read_csv(out / "trace.csv")
    _, timing = read_csv(out / "timing.csv")
    _, viol = read_csv(out / "violations.csv")
    summ = read_summary(out / "summary.txt")
    gaps = np.array([float(r["power"]) - float(r["reference"]) for r in trace])
    assert float(summ["rmse_kw"]) == pytest.approx(np.sqrt(np.mean(gaps ** 2)), abs=1e-5)
    above = any(float(r["slack_hi"]) < 0 or float(r["slack_lo"]) < 0 for r in trace)
    assert summ["aggregate_bound_violated"] == ("yes" if above else "no")
    mean_t = np.mean([float(r["solve_time"]) for r in timing])
    assert float(summ["mean_solve_time_s"]) == pytest.approx(mean_t, abs=1e-5)
    units = {(r["group"], r["unit"]) for r in viol if r["kind"] == "lockout"}
    assert float(summ["lockout_violation_pct"]) == pytest.approx(100 * len(units) / 35, abs=1e-5)
    under = {r["t"] for r in viol if r["kind"] == "undervoltage"}
    assert int(summ["undervoltage_steps"]) == len(under)
    assert summ["status"] == "completed"
    # under-voltage shows up exactly where the trace's lowest voltage is below the floor
    low = {r["t"] for r in trace if float(r["v_low"]) < 0.95}
    assert low == under


def test_benchmark1_reports_infeasible_step(tmp_path):
    out = tmp_path / "b1"
    code = main(["run", str(SCENARIOS / "experiment1-benchmark1.yaml"), "-o", str(out)])
    assert code == EXIT_INFEASIBLE
    summ = read_summary(out / "summary.txt")
    assert summ["status"].startswith("infeasible at step")
    _, trace = read_csv(out / "trace.csv")
    assert trace[-1]["status"] == "Infeasible"


def test_no_safe_cycle_is_a_setup_error(tmp_path, capsys):
    raw = raw_minimal()
    raw["bounds"] = {"P_lo": 6.0, "P_hi": 6.5}  # every unit on all the time
    p = tmp_path / "tight.yaml"
    p.write_text(yaml.safe_dump(raw))
    assert main(["run", str(p)]) == EXIT_SETUP
    assert "error" in capsys.readouterr().err


def test_cycles_and_bound_verbs(capsys):
    assert main(["cycles", str(SCENARIOS / "minimal.yaml")]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert len(doc) == 1 and 1 <= len(doc[0]["cycles"]) <= 4
    for c in doc[0]["cycles"]:
        assert len(c["nodes"]) == len(c["modes"]) and all(len(n) == 3 for n in c["nodes"])
    assert main(["bound", str(SCENARIOS / "experiment2.yaml")]) == EXIT_OK
    assert float(capsys.readouterr().out) == pytest.approx(24.94, abs=0.1)
    assert main(["bound", str(SCENARIOS / "minimal.yaml")]) == EXIT_CONFIG
