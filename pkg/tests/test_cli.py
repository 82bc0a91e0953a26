import json

import numpy as np
import pytest
from click.testing import CliRunner

from grpreweight.bench import InstanceSpec, generate_instance
from grpreweight.cli import main
from grpreweight.files import load_problem, save_problem, write_vector_csv
from grpreweight.model import CappedLog, GroupPartition, IdentityLoss, ProblemInstance


@pytest.fixture
def runner():
    return CliRunner()


def test_save_load_round_trip(tmp_path):
    prob, x_orig = generate_instance(InstanceSpec(12, 40, 3, seed=4))
    path = save_problem(tmp_path, prob, x_orig)
    back, xo = load_problem(path)
    np.testing.assert_array_equal(back.A, prob.A)
    np.testing.assert_array_equal(back.b, prob.b)
    np.testing.assert_array_equal(xo, x_orig)
    assert back.sigma == prob.sigma
    assert back.partition.groups == prob.partition.groups
    assert back.psi == prob.psi and back.phi == prob.phi


def test_capped_penalty_round_trip(tmp_path):
    prob, _ = generate_instance(InstanceSpec(12, 40, 3, seed=4))
    cap = CappedLog.from_feasible_point(0.1, prob.x_feasible, prob.partition)
    prob2 = ProblemInstance(prob.A, prob.b, prob.sigma, prob.partition, cap, IdentityLoss())
    back, _ = load_problem(save_problem(tmp_path, prob2))
    assert back.psi == cap and back.phi == IdentityLoss()


def test_generator_form(tmp_path):
    doc = {"seed": 3, "m": 12, "n": 40, "s": 3, "block_size": 2, "noise_scale": 0.005,
           "sigma_factor": 1.2}
    p = tmp_path / "gen.json"
    p.write_text(json.dumps(doc))
    prob, x_orig = load_problem(p)
    ref, xr = generate_instance(InstanceSpec(12, 40, 3, seed=3))
    np.testing.assert_array_equal(prob.A, ref.A)
    np.testing.assert_array_equal(x_orig, xr)


def test_header_mismatch_is_error(tmp_path):
    prob, _ = generate_instance(InstanceSpec(12, 40, 3, seed=4))
    path = save_problem(tmp_path, prob)
    doc = json.loads(path.read_text())
    doc["n"] = 41
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        load_problem(path)


def test_gen_solve_verify(runner, tmp_path):
    out = tmp_path / "inst"
    r = runner.invoke(main, ["gen", "--m", "24", "--n", "80", "--s", "3", "--seed", "2",
                             "--out", str(out)])
    assert r.exit_code == 0, r.output
    problem = out / "problem.json"
    assert problem.exists()
    report = tmp_path / "rep.json"
    xcsv = tmp_path / "x.csv"
    r = runner.invoke(main, ["solve", "--problem", str(problem), "--report", str(report),
                             "--emit-x", "--x-out", str(xcsv)])
    assert r.exit_code == 0, r.output
    summary = json.loads(r.output)
    assert summary["status"] == "converged"
    assert summary["res"] <= 0
    assert summary["recovery"]["success"] in (True, False)
    full = json.loads(report.read_text())
    assert len(full["final_x"]) == 80 and len(full["trace"]) == full["outer_iters"]
    r = runner.invoke(main, ["verify", "--problem", str(problem), "--point", str(xcsv)])
    assert r.exit_code == 0, r.output
    kkt = json.loads(r.output)
    assert set(kkt) >= {"feasibility", "stationarity", "complementarity", "lambda_star",
                        "scaled"}
    assert kkt["feasibility"] == 0.0


def test_solve_overrides(runner, tmp_path):
    runner.invoke(main, ["gen", "--m", "24", "--n", "80", "--s", "3", "--out", str(tmp_path)])
    r = runner.invoke(main, ["solve", "--problem", str(tmp_path / "problem.json"),
                             "--loss", "identity", "--eps", "0.2", "--max-outer", "2"])
    assert r.exit_code == 0, r.output
    assert json.loads(r.output)["outer_iters"] <= 2


def test_bench_csv_and_aggregates(runner, tmp_path):
    csv1, csv2 = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["bench", "--sizes", "16x40x2", "--trials", "2", "--seed", "7"]
    r1 = runner.invoke(main, args + ["--csv", str(csv1)])
    r2 = runner.invoke(main, args + ["--csv", str(csv2)])
    assert r1.exit_code == 0 and r2.exit_code == 0
    assert csv1.read_bytes() == csv2.read_bytes()
    agg = json.loads(r1.output)
    assert agg["overall"]["count"] == 2
    assert "16x40x2" in agg["by_size"]


def test_bad_arguments_exit_2(runner, tmp_path):
    r = runner.invoke(main, ["gen", "--m", "10", "--n", "21", "--s", "2", "--out",
                             str(tmp_path)])
    assert r.exit_code == 2
    r = runner.invoke(main, ["bench", "--sizes", "10x20"])
    assert r.exit_code == 2
    r = runner.invoke(main, ["solve", "--problem", str(tmp_path / "missing.json")])
    assert r.exit_code == 2
    r = runner.invoke(main, ["solve"])
    assert r.exit_code == 2


def test_point_length_mismatch_exit_2(runner, tmp_path):
    runner.invoke(main, ["gen", "--m", "12", "--n", "40", "--s", "2", "--out", str(tmp_path)])
    pt = tmp_path / "pt.csv"
    write_vector_csv(pt, np.zeros(7))
    r = runner.invoke(main, ["verify", "--problem", str(tmp_path / "problem.json"),
                             "--point", str(pt)])
    assert r.exit_code == 2


def test_hard_error_exit_1(runner, tmp_path):
    # rank-deficient matrix passes argument parsing but fails in the solver
    A = np.array([[1.0, 2.0, 0.0, 0.0], [2.0, 4.0, 0.0, 0.0]])
    prob = ProblemInstance(A, np.array([1.0, 1.0]), 0.1, GroupPartition.contiguous(4, 2),
                           CappedLog.from_cap(0.1, 1.0), IdentityLoss())
    path = save_problem(tmp_path, prob)
    r = runner.invoke(main, ["solve", "--problem", str(path)])
    assert r.exit_code == 1
    assert "error" in r.output
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    r = runner.invoke(main, ["solve", "--problem", str(bad)])
    assert r.exit_code == 1
