import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from itrboost.cli import build_parser, main
from itrboost.data import Dataset, load_csv, write_csv


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def sim_file(tmp_path):
    path = tmp_path / "s2.csv"
    assert main(["simulate", "--scenario", "2", "--n", "150", "--p", "10", "--seed", "1",
                 "--out", str(path)]) == 0
    return path


@pytest.fixture
def params_file(tmp_path):
    path = tmp_path / "params.json"
    path.write_text(json.dumps({"rounds": 30, "shrinkage": 0.1, "max_depth": 2}))
    return path


def test_simulate_shape_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["simulate", "--scenario", "1", "--n", "100", "--p", "10", "--seed", "1", "--out"]
    assert main(args + [str(a)]) == 0
    assert "n=100 p=10 oracle_plus_fraction=" in capsys.readouterr().out
    assert main(args + [str(b)]) == 0
    table = rows(a)
    assert len(table) == 101 and all(len(r) == 13 for r in table)
    assert table[0][-3:] == ["treatment", "outcome", "oracle"]
    assert a.read_bytes() == b.read_bytes()


def test_simulate_dimension_error(tmp_path):
    out = tmp_path / "x.csv"
    with pytest.raises(SystemExit) as e:
        main(["simulate", "--scenario", "5", "--n", "10", "--p", "4", "--out", str(out)])
    assert e.value.code == 2 and not out.exists()


def test_train_predict_round_trip(tmp_path, sim_file, params_file, capsys):
    model, pred = tmp_path / "m.json", tmp_path / "d.csv"
    assert main(["train", "--method", "direct-boosting-1", "--data", str(sim_file),
                 "--params", str(params_file), "--model-out", str(model)]) == 0
    assert '"rounds": 30' in capsys.readouterr().out
    assert main(["predict", "--model", str(model), "--data", str(sim_file),
                 "--out", str(pred)]) == 0
    out = rows(pred)
    assert out[0] == ["decision"] and len(out) == 151
    assert {r[0] for r in out[1:]} <= {"1", "-1"}


def test_train_single_arm_fails(tmp_path, capsys):
    path = tmp_path / "one.csv"
    write_csv(Dataset(np.arange(10.0)[:, None], np.ones(10, int), np.arange(10.0)), path)
    code = main(["train", "--method", "indirect-boosting", "--data", str(path),
                 "--model-out", str(tmp_path / "m.json")])
    assert code == 1
    assert "arm" in capsys.readouterr().err


def test_train_direct_2_null_mu_constant_outcome(tmp_path):
    path = tmp_path / "const.csv"
    rng = np.random.default_rng(0)
    write_csv(Dataset(rng.normal(size=(30, 3)), rng.choice([-1, 1], size=30),
                      np.full(30, 4.0)), path)
    model = tmp_path / "m.json"
    with pytest.warns(UserWarning, match="zero"):
        assert main(["train", "--method", "direct-boosting-2", "--mu", "null", "--data",
                     str(path), "--model-out", str(model)]) == 0
    pred = tmp_path / "d.csv"
    main(["predict", "--model", str(model), "--data", str(path), "--out", str(pred)])
    assert {r[0] for r in rows(pred)[1:]} == {"1"}


def linear_model(path, p):
    coef = [1.0] + [0.0] * (p - 1)
    path.write_text(json.dumps({"format": "itrboost-policy/1", "method": "q-linear",
                                "selected": {}, "policy": {"kind": "linear", "intercept": 0.0,
                                                           "coefficients": coef}}))


def test_evaluate_policy_equal_to_treatment(tmp_path, capsys):
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, size=(40, 2))
    A = np.where(X[:, 0] < 0, -1, 1)
    Y = rng.normal(size=40)
    data = tmp_path / "d.csv"
    write_csv(Dataset(X, A, Y), data, extra={"oracle": A.tolist()})
    model = tmp_path / "m.json"
    linear_model(model, 2)
    report = tmp_path / "r.json"
    assert main(["evaluate", "--model", str(model), "--data", str(data), "--oracle-col",
                 "oracle", "--report", str(report)]) == 0
    rep = json.loads(report.read_text())
    assert rep["value"] == pytest.approx(Y.mean(), rel=1e-14)
    assert rep["misclassification"] == 0


def test_cv_command(tmp_path, sim_file, capsys):
    grid = tmp_path / "g.json"
    grid.write_text(json.dumps({"rounds": [10, 20], "shrinkages": [0.1], "depths": [2]}))
    table = tmp_path / "t.csv"
    assert main(["cv", "--method", "indirect-boosting", "--data", str(sim_file), "--grid",
                 str(grid), "--k", "3", "--table", str(table)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["best"]["rounds"] in (10, 20)
    assert len(rows(table)) == 3


def test_d_linear_high_dimension_uses_lasso(tmp_path, capsys):
    data = tmp_path / "hd.csv"
    main(["simulate", "--scenario", "1", "--n", "120", "--p", "15", "--out", str(data)])
    model = tmp_path / "m.json"
    assert main(["train", "--method", "d-linear", "--data", str(data), "--k", "3",
                 "--model-out", str(model)]) == 0
    sel = json.loads(model.read_text())["selected"]
    assert sel["lasso_penalty"] > 0


def test_mu_lasso_default_penalty(tmp_path, sim_file, params_file, capsys):
    model = tmp_path / "m.json"
    assert main(["train", "--method", "direct-boosting-2", "--mu", "lasso", "--data",
                 str(sim_file), "--params", str(params_file), "--model-out", str(model)]) == 0
    assert "common-effect lasso penalty" in capsys.readouterr().out


def test_benchmark_one_cell(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenarios": [1], "sizes": [[50, 4]], "replications": 1,
                               "test_n": 100, "methods": ["Q-learning"]}))
    out = tmp_path / "out"
    assert main(["benchmark", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(rows(out / "summary.csv")) == 2


@pytest.mark.parametrize("argv", [
    ["train", "--method", "q-linear", "--data", "missing.csv", "--params", "p.json", "--cv",
     "--model-out", "m.json"],
    ["train", "--method", "q-linear", "--data", "missing.csv", "--params", "p.json",
     "--model-out", "m.json"],
    ["train", "--method", "direct-boosting-2", "--data", "missing.csv",
     "--mu-lasso-penalty", "1", "--model-out", "m.json"],
    ["cv", "--method", "q-linear", "--data", "missing.csv", "--k", "1"],
    ["benchmark", "--replications", "0"],
    ["benchmark", "--replications", "5", "--full-replications"],
    ["simulate", "--scenario", "9", "--n", "5", "--p", "5", "--out", "x.csv"],
    ["train", "--method", "owl", "--data", "missing.csv", "--model-out", "m.json"],
    [],
])
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == 2
    assert list(tmp_path.iterdir()) == []


def test_runtime_errors_exit_1(tmp_path, capsys):
    assert main(["predict", "--model", str(tmp_path / "nope.json"), "--data", "x.csv",
                 "--out", str(tmp_path / "o.csv")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    data = tmp_path / "d.csv"
    data.write_text("x_1,treatment,outcome\n1,1,1\n")
    assert main(["predict", "--model", str(bad), "--data", str(data),
                 "--out", str(tmp_path / "o.csv")]) == 1


SUBCOMMANDS = ("simulate", "train", "predict", "evaluate", "cv", "benchmark")


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help_lists_flags(cmd):
    proc = subprocess.run([sys.executable, "-m", "itrboost", cmd, "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    sub = next(a for a in build_parser()._actions if a.dest == "command").choices[cmd]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in proc.stdout
    assert "default" in proc.stdout


def test_entry_point_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "itrboost", "simulate", "--scenario", "5",
                           "--n", "5", "--p", "3", "--out", str(tmp_path / "x.csv")],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "p >= 8" in proc.stderr
