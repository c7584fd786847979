import json
import math

import numpy as np
import pytest

from psidim import msvm
from psidim.capacity import FiniteFunctionClass
from psidim.cli import EXIT_BUDGET, EXIT_INVALID, EXIT_OK, EXIT_USAGE, main
from psidim.data import fixture_blobs, save_dataset, write_class


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--json")
    return code, (json.loads(out) if code == EXIT_OK or out.strip().startswith("{") else None), err


@pytest.fixture
def blobs_file(tmp_path):
    path = tmp_path / "blobs.csv"
    save_dataset(fixture_blobs(), path)
    return path


@pytest.fixture
def class_file(tmp_path):
    # two Delta-images on two points; margin Natarajan dimension 1 at gamma 1
    vals = np.array([[[1.0, -1, -1], [-1, 1, -1]]] * 2)
    path = tmp_path / "cls.txt"
    write_class(FiniteFunctionClass(vals), path)
    return path


def test_generate_writes_dataset(capsys, tmp_path):
    out = tmp_path / "g.csv"
    code, text, _ = run(capsys, "generate", "--out", out, "--seed", 3, "--q", 4, "--per-class", 5)
    assert code == EXIT_OK and "samples" in text
    assert len(out.read_text().splitlines()) == 20


def test_generate_needs_out(capsys):
    assert run(capsys, "generate")[0] == EXIT_USAGE


def test_train_and_round_trip(capsys, tmp_path, blobs_file):
    model_path = tmp_path / "m.json"
    code, rep, _ = run_json(capsys, "train", blobs_file, "--out", model_path)
    assert code == EXIT_OK
    res = rep["result"]
    assert res["zero_one_risk"] == 0.0
    assert res["sum_to_zero_residual"] < 1e-9
    assert rep["config"]["lambda"] == 0.01 and rep["config"]["kernel"] == "linear"
    model = msvm.MSVMModel.load(model_path)
    assert model.q == 3


def test_identical_configs_give_identical_reports(capsys, tmp_path, blobs_file):
    reports = []
    for _ in range(2):
        code, out, _ = run(capsys, "train", blobs_file, "--out", tmp_path / "m.json",
                           "--max-iters", 200, "--json")
        assert code == EXIT_OK
        reports.append(out)
    assert reports[0] == reports[1]


def test_bound_on_zero_model(capsys, tmp_path, blobs_file):
    ds = fixture_blobs()
    path = tmp_path / "zero.json"
    msvm.zero_model(ds.features, 3, msvm.KernelSpec()).save(path)
    m, gamma, delta = len(ds), 0.5, 0.05
    code, rep, _ = run_json(capsys, "bound", path, blobs_file, "--gamma", gamma)
    assert code == EXIT_OK
    res = rep["result"]
    assert res["d"] == 0 and res["emp_margin_risk"] == 1.0
    expected = 1.0 + math.sqrt((2 / m) * (math.log(2) + math.log(2 / (gamma * delta)))) + 1 / m
    assert res["final_bound"] == pytest.approx(expected, rel=1e-12)
    for key in ("m", "gamma", "delta", "q", "d", "log_covering", "bias_factor_log",
                "deviation_term", "final_bound", "route"):
        assert key in res


def test_bound_precondition_is_invalid_input(capsys, tmp_path, blobs_file):
    model_path = tmp_path / "m.json"
    assert run(capsys, "train", blobs_file, "--out", model_path, "--max-iters", 100)[0] == EXIT_OK
    code, _, err = run(capsys, "bound", model_path, blobs_file)
    assert code == EXIT_INVALID and "2m >= d" in err


def test_capacity_and_certify(capsys, tmp_path, class_file):
    cert = tmp_path / "cert.json"
    code, rep, _ = run_json(capsys, "capacity", class_file, "--gamma", 1.0,
                            "--cert", cert, "--epsilon", 1.5, "--cover-n", 1)
    assert code == EXIT_OK
    res = rep["result"]
    assert res["dimension"] == 1
    assert res["cover"]["exact_size"] <= res["cover"]["greedy_size"]
    assert res["cover"]["sup"]["exact"] is True
    code, rep, _ = run_json(capsys, "certify", cert, class_file)
    assert code == EXIT_OK and rep["result"]["valid"] is True
    # tamper with the witness
    d = json.loads(cert.read_text())
    d["witness"] = [5.0]
    cert.write_text(json.dumps(d))
    code, _, _ = run(capsys, "certify", cert, class_file)
    assert code == EXIT_INVALID


def test_capacity_discrete_and_psi(capsys, tmp_path):
    vals = np.array([[[3.0, 1, 0], [0, 3, 1], [1, 0, 3]]])
    path = tmp_path / "raw.txt"
    write_class(FiniteFunctionClass(vals), path)
    code, rep, _ = run_json(capsys, "capacity", path, "--notion", "natarajan")
    assert code == EXIT_OK and rep["result"]["dimension"] == 1
    code, rep, _ = run_json(capsys, "capacity", path, "--apply", "delta", "--notion",
                            "gamma-psi", "--psi", "1,-1,0;0,1,-1", "--gamma", 0.5)
    assert code == EXIT_OK and rep["result"]["dimension"] == 1
    assert run(capsys, "capacity", path, "--notion", "psi")[0] == EXIT_USAGE
    assert run(capsys, "capacity", path, "--notion", "fat")[0] == EXIT_INVALID


def test_capacity_overbudget(capsys, tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "big.txt"
    write_class(FiniteFunctionClass(rng.normal(size=(6, 6, 1))), path)
    code, _, err = run(capsys, "capacity", path, "--notion", "fat", "--gamma", 0.01,
                       "--budget", 10)
    assert code == EXIT_BUDGET and "budget" in err


def test_rate(capsys, tmp_path):
    report = tmp_path / "rate.json"
    code, text, _ = run(capsys, "rate", "--out", report)
    assert code == EXIT_OK and "ratio spread" in text
    rep = json.loads(report.read_text())
    assert rep["result"]["ratio_spread"] < 0.15
    assert [r["m"] for r in rep["result"]["rows"]] == [1000, 10000, 100000, 1000000]


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# rate settings\nm_list = 1000,4000\ngamma = 1.0\ndelta=0.1\n")
    code, rep, _ = run_json(capsys, "rate", "--config", cfg)
    assert code == EXIT_OK
    assert rep["config"]["delta"] == 0.1
    assert len(rep["result"]["rows"]) == 2
    # flags override the file
    code, rep, _ = run_json(capsys, "rate", "--config", cfg, "--delta", 0.2)
    assert rep["config"]["delta"] == 0.2


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("gamma = 1\nlamda = 0.1\n")
    code, _, err = run(capsys, "rate", "--config", cfg)
    assert code == EXIT_USAGE and "lamda" in err


def test_usage_errors(capsys):
    assert run(capsys)[0] == EXIT_USAGE
    assert run(capsys, "frobnicate")[0] == EXIT_USAGE
    assert run(capsys, "rate", "--gamma", "abc")[0] == EXIT_USAGE


def test_missing_file_is_invalid(capsys, tmp_path):
    assert run(capsys, "train", tmp_path / "nope.csv")[0] == EXIT_INVALID


def test_bad_label_is_invalid(capsys, tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,0.0\n0,1.0\n")
    code, _, err = run(capsys, "train", p)
    assert code == EXIT_INVALID and "line 2" in err


def test_sparse_format(capsys, tmp_path):
    p = tmp_path / "s.txt"
    save_dataset(fixture_blobs(), p, "sparse")
    code, rep, _ = run_json(capsys, "train", p, "--format", "sparse", "--max-iters", 100)
    assert code == EXIT_OK and rep["result"]["m"] == 60


def test_selfcheck_exit_zero(capsys, tmp_path):
    report = tmp_path / "self.json"
    code, text, _ = run(capsys, "selfcheck", "--out", report)
    assert code == EXIT_OK
    assert text.count("[PASS]") == 8
    assert json.loads(report.read_text())["result"]["passed"] is True
