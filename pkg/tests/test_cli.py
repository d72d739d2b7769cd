import json
from pathlib import Path

import pytest

from ksym import cli
from ksym.chart import Chart
from ksym.expr import Verdict, is_zero, normalize, parse

CHART = Chart(1, 1)
SYSTEMS = Path(__file__).resolve().parent.parent / "systems"


def run(tmp_path, *argv):
    report = tmp_path / "report.json"
    code = cli.main([*argv, "--report", str(report)])
    return code, json.loads(report.read_text())


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


# classify ---------------------------------------------------------------------

def test_classify_laplace(workdir):
    code, rep = run(workdir, "classify", str(SYSTEMS / "laplace.json"))
    assert code == 0
    by_name = {c["name"]: c for c in rep["result"]["candidates"]}
    assert by_name["translation"]["order"] == 1
    assert "skipped" in by_name["wrong"]
    assert rep["schema_version"] == cli.SCHEMA_VERSION
    assert rep["engine"]["name"] == "ksym"


def test_classify_dilation_reports_no_order(workdir, capsys):
    code, rep = run(workdir, "classify", str(SYSTEMS / "dilation.json"), "--nmax", "5")
    assert code == 0
    assert rep["result"]["candidates"][0]["order"] is None
    assert "no order <= 5" in capsys.readouterr().out


def test_classify_malformed_expression(workdir, capsys):
    bad = json.loads((SYSTEMS / "laplace.json").read_text())
    bad["hamiltonian"] = "(p_1_1^2 + * p_2_1^2)/2"
    path = workdir / "bad.json"
    path.write_text(json.dumps(bad))
    code, rep = run(workdir, "classify", str(path))
    assert code == 1
    assert "byte offset 11" in rep["error"]["message"]
    assert "system.hamiltonian" in capsys.readouterr().err


def test_classify_unknown_identifier(workdir):
    bad = json.loads((SYSTEMS / "order2.json").read_text())
    bad["candidates"]["Y"]["components"]["q_1"] = "q_2"
    path = workdir / "bad.json"
    path.write_text(json.dumps(bad))
    code, rep = run(workdir, "classify", str(path))
    assert code == 1 and "q_2" in rep["error"]["message"]


def test_invalid_json_reports_position(workdir):
    path = workdir / "broken.json"
    path.write_text('{"n": 1,\n "k": }')
    code, rep = run(workdir, "classify", str(path))
    assert code == 1 and "line 2" in rep["error"]["message"]


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("n"),
    lambda d: d.update(n_max=0),
    lambda d: d["grids"]["flow"].update(spacing=[0.0]),
    lambda d: d["safe_box"].update(q_9=[0, 1]),
    lambda d: d["candidates"].update(both={"lift": ["1"], "charge": ["1"]}),
])
def test_validation_errors_exit_one(workdir, mutate):
    data = json.loads((SYSTEMS / "order2.json").read_text())
    mutate(data)
    path = workdir / "bad.json"
    path.write_text(json.dumps(data))
    code, rep = run(workdir, "classify", str(path))
    assert code == 1 and rep["error"]["kind"] == "input"


# charge -----------------------------------------------------------------------------

def test_charge_translation(workdir):
    code, rep = run(workdir, "charge", str(SYSTEMS / "laplace.json"), "--candidate", "translation")
    assert code == 0
    g = rep["result"]["charge"]["g"]
    assert [c["expression"] for c in g] == ["p_1_1", "p_2_1"]
    assert rep["result"]["charge"]["route_agreement"] == ["Zero", "Zero"]


def test_charge_order_two(workdir):
    code, rep = run(workdir, "charge", str(SYSTEMS / "order2.json"), "--candidate", "Y")
    assert code == 0
    charge = rep["result"]["charge"]
    assert charge["order"] == 2
    assert charge["g"][0] == {"kind": "closed-form", "expression": "p_1_1/q_1"}
    assert charge["route_agreement"] == ["Zero"]


def test_charge_base_override(workdir):
    code, rep = run(workdir, "charge", str(SYSTEMS / "order2.json"), "--candidate", "Y", "--base", "p_1_1=0.5")
    assert code == 0
    assert rep["result"]["charge"]["base"] == {"q_1": 1.0, "p_1_1": 0.5}
    g = parse(rep["result"]["charge"]["g"][0]["expression"], CHART)
    assert is_zero(normalize(g - parse("p_1_1/q_1 - 1/2", CHART)), CHART) is Verdict.ZERO
    code, rep = run(workdir, "charge", str(SYSTEMS / "order2.json"), "--candidate", "Y", "--base", "z=1")
    assert code == 1


def test_charge_refuses_without_lie_h_zero(workdir):
    code, rep = run(workdir, "charge", str(SYSTEMS / "order2.json"), "--candidate", "shift")
    assert code == 1 and "L(Y)H" in rep["error"]["message"]
    code, rep = run(workdir, "charge", str(SYSTEMS / "order2.json"), "--candidate", "dilation")
    assert code == 1


def test_charge_unknown_candidate(workdir):
    code, rep = run(workdir, "charge", str(SYSTEMS / "order2.json"), "--candidate", "nope")
    assert code == 1


def test_route_mismatch_exit_three(workdir, monkeypatch, capsys):
    import ksym.noether as nm

    monkeypatch.setattr(nm, "_route_agreement", lambda *a: Verdict.NONZERO)
    code, rep = run(workdir, "charge", str(SYSTEMS / "order2.json"), "--candidate", "Y")
    assert code == 3
    assert "disagree" in rep["result"]["warning"]
    assert "WARNING" in capsys.readouterr().out


# simulate ------------------------------------------------------------------------------

def test_simulate_oscillator(workdir):
    out = workdir / "osc.csv"
    code, rep = run(workdir, "simulate", str(SYSTEMS / "oscillator.json"), "--grid", "flow", "--out", str(out))
    assert code == 0
    assert rep["result"]["hdw_residual"]["sup_norm"] <= 1e-6
    assert rep["result"]["grid_metadata"]["spacing"] == [0.001]
    lines = out.read_text().splitlines()
    assert lines[0] == "t_1,q_1,p_1_1" and len(lines) == 1002


def test_simulate_analytic_section(workdir):
    code, rep = run(workdir, "simulate", str(SYSTEMS / "laplace.json"), "--grid", "exact")
    assert code == 0
    assert rep["result"]["hdw_residual"]["sup_norm"] <= 1e-10
    assert (workdir / "laplace-exact.csv").exists()


def test_simulate_missing_grid(workdir):
    code, rep = run(workdir, "simulate", str(SYSTEMS / "dilation.json"), "--grid", "flow")
    assert code == 1


def test_simulate_non_integrable(workdir):
    code, rep = run(workdir, "simulate", str(SYSTEMS / "noncommuting.json"), "--grid", "flow")
    assert code == 2
    assert "path-dependence" in rep["error"]["message"]


# verify --------------------------------------------------------------------------------------

def test_verify_laplace_exact_grid(workdir):
    code, rep = run(workdir, "verify", str(SYSTEMS / "laplace.json"), "--candidate", "translation", "--grid", "exact")
    assert code == 0
    num = rep["result"]["numeric"]
    assert num["sup_norm"] <= 1e-12 and num["tolerance"] == 1e-12 and num["spacing"] == [0.01, 0.01]
    assert rep["result"]["symbolic"]["verdict"] == "Zero"


def test_verify_order_two_flow(workdir):
    code, rep = run(workdir, "verify", str(SYSTEMS / "order2.json"), "--candidate", "Y", "--grid", "flow")
    assert code == 0
    assert rep["result"]["numeric"]["sup_norm"] <= 1e-8


def test_verify_wrong_charge_fails(workdir, capsys):
    code, rep = run(workdir, "verify", str(SYSTEMS / "laplace.json"), "--candidate", "wrong", "--grid", "exact")
    assert code == 2
    assert rep["result"]["passed"] is False
    assert rep["result"]["numeric"]["sup_norm"] == pytest.approx(0.99)
    assert "FAIL" in capsys.readouterr().out


def test_verify_from_csv(workdir):
    csv = workdir / "osc.csv"
    assert cli.main(["simulate", str(SYSTEMS / "oscillator.json"), "--grid", "flow", "--out", str(csv)]) == 0
    code, rep = run(workdir, "verify", str(SYSTEMS / "oscillator.json"), "--candidate", "energy", "--csv", str(csv))
    assert code == 0 and rep["result"]["grid"]["source"] == "csv"


def test_verify_csv_schema_mismatch(workdir):
    csv = workdir / "osc.csv"
    assert cli.main(["simulate", str(SYSTEMS / "oscillator.json"), "--grid", "flow", "--out", str(csv)]) == 0
    code, rep = run(workdir, "verify", str(SYSTEMS / "laplace.json"), "--candidate", "translation", "--csv", str(csv))
    assert code == 1 and "header" in rep["error"]["message"]


# determinism and selftest ------------------------------------------------------------------------

def test_reports_are_byte_identical(workdir):
    paths = []
    for i in range(2):
        report = workdir / f"r{i}.json"
        cli.main(["verify", str(SYSTEMS / "order2.json"), "--candidate", "Y", "--grid", "flow", "--report", str(report)])
        paths.append(report.read_bytes())
    assert paths[0] == paths[1]


def test_timings_are_opt_in(workdir):
    code, rep = run(workdir, "classify", str(SYSTEMS / "laplace.json"))
    assert "timings" not in rep
    code, rep = run(workdir, "classify", str(SYSTEMS / "laplace.json"), "--timings")
    assert rep["timings"]["wall_seconds"] >= 0


def test_selftest_single_suite(workdir):
    code, rep = run(workdir, "selftest", "--suite", "canonical-structure")
    assert code == 0
    assert [s["name"] for s in rep["result"]["suites"]] == ["canonical-structure"]


def test_system_files_shipped_are_valid():
    for path in sorted(SYSTEMS.glob("*.json")):
        cli.load_system(str(path))
