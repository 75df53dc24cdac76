import csv
import json

import pytest

from iis_sqda.cli import main


def _simulate(tmp_path, name="sim", *extra):
    out = tmp_path / name
    assert main(["simulate", "--model", "m2", "--p", "50", "--n1", "60", "--n2", "60",
                 "--seed", "3", "--out", str(out), *extra]) == 0
    return out


def test_simulate_deterministic(tmp_path):
    a, b = _simulate(tmp_path, "a"), _simulate(tmp_path, "b")
    assert (a / "data.csv").read_bytes() == (b / "data.csv").read_bytes()
    cfg = json.loads((a / "config.json").read_text())
    assert cfg["seed"] == 3 and cfg["model"] == "m2"
    scen = json.loads((a / "scenario.json").read_text())
    assert scen["trueMainSupport"] == [0, 1] and len(scen["trueInteractionSupport"]) == 6
    c = _simulate(tmp_path, "c", "--seed", "4")
    assert (a / "data.csv").read_bytes() != (c / "data.csv").read_bytes()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": "m1", "p": 45, "n1": 20, "n2": 20, "out": str(tmp_path / "x")}))
    assert main(["simulate", "--config", str(cfg), "--n2", "25"]) == 0
    used = json.loads((tmp_path / "x" / "config.json").read_text())
    assert used["model"] == "m1" and used["n1"] == 20 and used["n2"] == 25
    rows = (tmp_path / "x" / "data.csv").read_text().splitlines()
    assert len(rows) == 46


def test_usage_errors_exit_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["simulate", "--model", "m9"])
    assert e.value.code == 2
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    with pytest.raises(SystemExit) as e:
        main(["simulate", "--config", str(cfg)])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["screen"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["benchmark", "--config", str(cfg)])
    assert e.value.code == 2


def test_data_errors_exit_1(tmp_path, capsys):
    assert main(["screen", "--data", str(tmp_path / "missing.csv")]) == 1
    assert "error:" in capsys.readouterr().err


def test_screen_outputs(tmp_path):
    sim = _simulate(tmp_path)
    out = tmp_path / "scr"
    assert main(["screen", "--data", str(sim / "data.csv"), "--out", str(out)]) == 0
    res = json.loads((out / "screen.json").read_text())
    assert res["mode"] == "threshold" and len(res["stats_omega1"]) == 50
    assert res["selectedNames"] == [f"z{j}" for j in res["I"]]
    rows = list(csv.DictReader((out / "screen.csv").open()))
    assert len(rows) == 50 and sum(int(r["selected"]) for r in rows) == len(res["I"])
    assert main(["screen", "--data", str(sim / "data.csv"), "--omega", "0",
                 "--precision", "identity", "--out", str(out)]) == 0
    assert len(json.loads((out / "screen.json").read_text())["I"]) == 50
    assert main(["screen", "--data", str(sim / "data.csv"), "--mode", "stepwise",
                 "--out", str(tmp_path / "sw")]) == 0
    assert json.loads((tmp_path / "sw" / "screen.json").read_text())["mode"] == "stepwise"


def test_fit_predict_roundtrip(tmp_path, capsys):
    sim = _simulate(tmp_path)
    model = tmp_path / "model.json"
    assert main(["fit", "--data", str(sim / "data.csv"), "--out", str(model), "--folds", "3"]) == 0
    payload = json.loads(model.read_text())
    assert payload["labelValues"] == ["1", "2"] and len(payload["featureNames"]) == 50
    assert (tmp_path / "model.config.json").exists()
    pred = tmp_path / "pred.csv"
    capsys.readouterr()
    assert main(["predict", "--model", str(model), "--data", str(sim / "data.csv"),
                 "--out", str(pred)]) == 0
    mr = float(capsys.readouterr().out.split(":")[1])
    assert mr <= 0.5
    rows = list(csv.DictReader(pred.open()))
    assert len(rows) == 120 and {r["predicted"] for r in rows} <= {"1", "2"}


def test_predict_rejects_mismatch(tmp_path, capsys):
    sim = _simulate(tmp_path)
    model = tmp_path / "model.json"
    assert main(["fit", "--data", str(sim / "data.csv"), "--out", str(model),
                 "--precision", "identity", "--folds", "3"]) == 0
    other = tmp_path / "other"
    assert main(["simulate", "--model", "m1", "--p", "45", "--n1", "10", "--n2", "10",
                 "--out", str(other)]) == 0
    assert main(["predict", "--model", str(model), "--data", str(other / "data.csv"),
                 "--out", str(tmp_path / "p.csv")]) == 1
    assert "expects 50 features" in capsys.readouterr().err


def test_benchmark_writes_report(tmp_path, capsys):
    cfg = tmp_path / "bench.json"
    cfg.write_text(json.dumps({"model": "m2", "p": 50, "reps": 2, "testSize": 400,
                               "methods": ["Bayes", "Oracle"]}))
    out = tmp_path / "b"
    assert main(["benchmark", "--config", str(cfg), "--out", str(out), "--seed", "9"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["reps"] == 2 and {r["method"] for r in rep["records"]} == {"Bayes", "Oracle"}
    assert (out / "report.csv").exists()
    assert json.loads((out / "config.json").read_text())["seed"] == 9
    assert "Oracle" in capsys.readouterr().out


def test_benchmark_failure_exit_code(tmp_path):
    assert main(["benchmark", "--model", "m2", "--p", "50", "--n1", "30", "--n2", "30",
                 "--reps", "1", "--test-size", "100", "--methods", "QDA",
                 "--out", str(tmp_path / "q")]) == 1
