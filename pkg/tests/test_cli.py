import csv
import json
import subprocess
import sys

import pytest

from survkit import cli


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    quick = ["--set", "epochs=20", "--set", "folds=2", "--set", "interval=0.5"]
    assert cli.main(["simulate", "--out", str(out), "--seed", "3", "--set", "n_participants=20"]) == 0
    assert cli.main(["fit", "--out", str(out)]) == 0
    assert cli.main(["rank", "--out", str(out)]) == 0
    assert cli.main(["train", "--out", str(out)] + quick) == 0
    assert cli.main(["explain", "--out", str(out), "--set", "max_instances=20", "--set", "method=sampled",
                     "--set", "samples=10", "--set", "min_count=2"]) == 0
    return out


def test_pipeline_outputs(pipeline, capsys):
    for name in ("cohort.csv", "schema.json", "cox_summary.csv", "relief_weights.csv", "vif.csv",
                 "comparison.csv", "model.json", "shap_summary.csv", "shap_beeswarm.csv",
                 "simulate_config.json", "train_config.json"):
        assert (pipeline / name).exists(), name
    rows = list(csv.DictReader(open(pipeline / "comparison.csv")))
    assert [r["model"] for r in rows] == ["binary_choice", "linear_cph", "dcph1", "dcph2"]
    assert set(rows[0]) == {"model", "validation_cindex", "test_cindex"}
    assert json.loads((pipeline / "train_config.json").read_text())["epochs"] == 20


def test_evaluate_both_formats(pipeline, capsys):
    assert cli.main(["evaluate", "--out", str(pipeline)]) == 0
    assert cli.main(["evaluate", "--out", str(pipeline), "--set", "model=model.json"]) == 0
    doc = json.loads((pipeline / "evaluation.json").read_text())
    assert 0.0 <= doc["cindex"] <= 1.0


def test_design_feeds_simulate(tmp_path):
    assert cli.main(["design", "--out", str(tmp_path), "--set", "iters=200", "--set", "m=20"]) == 0
    lines = (tmp_path / "design.csv").read_text().splitlines()
    assert len(lines) == 21
    assert cli.main(["simulate", "--out", str(tmp_path), "--set", "design=design.csv",
                     "--set", "scenario_pool=20", "--set", "n_participants=3"]) == 0
    assert len((tmp_path / "scenarios.csv").read_text().splitlines()) == 21


def test_reruns_are_identical(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["simulate", "--out", str(tmp_path / d), "--seed", "5"]) == 0
    assert (tmp_path / "a" / "cohort.csv").read_bytes() == (tmp_path / "b" / "cohort.csv").read_bytes()


def test_config_file_layers(tmp_path):
    (tmp_path / "flat.json").write_text(json.dumps({"n_participants": 2, "scenario_pool": 30}))
    cfg = cli.build_config("simulate", tmp_path / "flat.json", ["n_participants=4"], seed=9)
    assert (cfg["n_participants"], cfg["scenario_pool"], cfg["seed"]) == (4, 30, 9)
    (tmp_path / "blocks.json").write_text(json.dumps({"simulate": {"n_participants": 6}, "fit": {"k": 1}}))
    assert cli.build_config("simulate", tmp_path / "blocks.json")["n_participants"] == 6
    assert cli.build_config("rank", tmp_path / "blocks.json")["k"] == 10


def test_unknown_setting_exits_1(tmp_path, capsys):
    assert cli.main(["simulate", "--out", str(tmp_path), "--set", "participants=3"]) == 1
    assert "unknown simulate setting" in capsys.readouterr().err
    assert cli.main(["simulate", "--out", str(tmp_path), "--set", "novalue"]) == 1


def test_missing_input_exits_1_with_json(tmp_path, capsys):
    assert cli.main(["fit", "--out", str(tmp_path), "--json-errors"]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    doc = json.loads(err[-1])
    assert doc["exit_code"] == 1 and doc["error"] == "FileNotFoundError"


def test_separation_exits_2(tmp_path, capsys):
    (tmp_path / "schema.json").write_text(json.dumps([{"name": "x", "kind": "continuous"}]))
    rows = "\n".join(f"{x},{10 - x},1" for x in range(10))
    (tmp_path / "cohort.csv").write_text("x,duration,event\n" + rows + "\n")
    assert cli.main(["fit", "--out", str(tmp_path), "--json-errors"]) == 2
    doc = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert doc["error"] == "SeparationError" and doc["exit_code"] == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "survkit", "simulate", "--out", str(tmp_path),
                        "--set", "n_participants=1", "--set", "scenario_pool=5"],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert json.loads(r.stdout)["command"] == "simulate"
