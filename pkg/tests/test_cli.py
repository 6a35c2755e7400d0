import csv
import json

import numpy as np
import pytest

from conftest import FIXTURES
from genma import fieldio
from genma.cli import main
from genma.slag import ExampleParams, example_tangent


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def fixture(name):
    return str(FIXTURES / f"{name}.json")


def test_solve_trivial(tmp_path, capsys):
    code, out, _ = run(capsys, "solve", "--config", fixture("trivial"), "--out", str(tmp_path))
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["sup_phi"] == 0.0 and summary["steps"] >= 5
    assert json.loads(out) == summary
    with open(tmp_path / "trace.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[-1]["t"]) == 1.0
    phi = fieldio.read_field(tmp_path / "phi.gmaf")
    assert phi.grid.sizes == (32, 8)


def test_solve_is_deterministic(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        code, _, _ = run(capsys, "solve", "--config", fixture("mixed_nonconstant"), "--grid", "16",
                         "--out", str(tmp_path / name), "--quiet")
        assert code == 0
        outs.append({p.name: p.read_bytes() for p in (tmp_path / name).iterdir()})
    assert outs[0] == outs[1]
    assert set(outs[0]) == {"summary.json", "trace.csv", "phi.gmaf"}


def test_solve_tmax_and_tol(tmp_path, capsys):
    code, out, _ = run(capsys, "solve", "--config", fixture("mixed_nonconstant"), "--grid", "8,8",
                       "--tmax", "0.5", "--tol", "1e-9")
    assert code == 0
    summary = json.loads(out)
    assert summary["tmax"] == 0.5 and summary["final_residual"] <= 1e-9
    assert summary["sizes"] == [8, 8]


def test_validate_cone_violation(tmp_path, capsys):
    code, out, err = run(capsys, "validate", "--config", fixture("cone_violating"), "--out", str(tmp_path))
    assert code == 3
    assert json.loads(err)["check"] == "cone"
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["check"] == "cone" and not report["valid"]
    assert [p.name for p in tmp_path.iterdir()] == ["report.json"]


def test_validate_valid_problem(capsys):
    code, out, _ = run(capsys, "validate", "--config", fixture("mixed_constant"))
    assert code == 0 and json.loads(out)["valid"]


def test_solve_invalid_problem(capsys):
    code, _, err = run(capsys, "solve", "--config", fixture("cone_violating"))
    assert code == 3 and json.loads(err)["error"] == "invalid_problem"


@pytest.mark.parametrize("argv", [
    ["solve"],
    ["solve", "--config", "/nonexistent.json"],
    ["bogus"],
    ["solve", "--config", fixture("trivial"), "--tmax", "2"],
    ["solve", "--config", fixture("trivial"), "--grid", "12"],
    ["example", "--k", "1"],
])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 1
    assert json.loads(err)["error"] == "usage"


def test_solver_failure_exit_code(tmp_path, capsys):
    cfg = json.loads((FIXTURES / "mixed_nonconstant.json").read_text())
    cfg["solver"] = {"max_newton": 0}
    cfg["grid"] = [8, 8]
    path = tmp_path / "p.json"
    path.write_text(json.dumps(cfg))
    code, _, err = run(capsys, "solve", "--config", str(path))
    assert code == 2
    assert json.loads(err)["collapsed"] == "newton"


def test_unknown_solver_option(tmp_path, capsys):
    cfg = json.loads((FIXTURES / "trivial.json").read_text())
    cfg["solver"] = {"speed": "fast"}
    path = tmp_path / "p.json"
    path.write_text(json.dumps(cfg))
    code, _, _ = run(capsys, "solve", "--config", str(path))
    assert code == 3


def test_example_table(tmp_path, capsys):
    code, out, _ = run(capsys, "example", "--k", "30", "--eps", "1e-3", "--out", str(tmp_path))
    assert code == 0
    rows = list(csv.DictReader(out.splitlines()))
    assert [int(r["k"]) for r in rows] == list(range(2, 31))
    vals = np.array([float(r["tan_theta"]) for r in rows])
    assert np.all(vals > 0) and np.all(np.diff(vals) > 0)
    for r in rows:
        assert float(r["tan_theta"]) == example_tangent(ExampleParams(int(r["k"]), 1e-3))
    assert (tmp_path / "example.csv").read_text() == out


def test_example_intersections(capsys):
    code, out, _ = run(capsys, "example", "--k", "3", "--intersections", "2", "1", "1", "1")
    assert code == 0
    last = out.splitlines()[-1].split(",")
    assert float(last[1]) == example_tangent(ExampleParams(3, 1e-3, 2.0, 1.0, 1.0, 1.0))


def test_chern_command(tmp_path, capsys):
    code, out, _ = run(capsys, "chern", "--config", fixture("chern_nonlinear"), "--out", str(tmp_path))
    assert code == 0
    summary = json.loads(out)
    assert summary["hypotheses"]["positive"]
    assert (tmp_path / "alpha_1.gmaf").exists() and (tmp_path / "alpha_2.gmaf").exists()


def test_chern_solve(capsys):
    code, out, _ = run(capsys, "chern", "--config", fixture("chern_nonlinear"), "--solve", "--grid", "8,8")
    assert code == 0
    assert json.loads(out)["chern_residual"] <= 1e-10


def test_slag_command(capsys):
    code, out, _ = run(capsys, "slag", "--config", fixture("slag_proportional"))
    assert code == 0
    phase = json.loads(out)["phase"]
    assert phase["tan_theta_hat"] == pytest.approx(970 / 299)


def test_slag_rejects_wrong_block(capsys):
    code, _, err = run(capsys, "slag", "--config", fixture("trivial"))
    assert code == 3


def test_seeded_solve(capsys):
    code, out, _ = run(capsys, "solve", "--config", fixture("seeded"))
    assert code == 0
    summary = json.loads(out)
    assert summary["path"] == "seeded" and summary["final_residual"] <= 1e-10


def test_selftest(capsys):
    code, out, _ = run(capsys, "selftest")
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 8 and all(line.startswith("PASS") for line in lines)
