import json

import pytest

from bibolab.cli import main
from bibolab.dataset import load_csv

CONFIG = {
    "seed": 7,
    "scenario": {"n_users": 5, "seed": 1,
                 "network": None},
    "run": {"dataset": "d.csv", "sensors": ["GPS"], "models": ["RF"], "lambdas": [0, 1.0],
            "draws": 2, "k_folds": 2,
            "rf_grid": {"n_estimators": [10], "max_features": ["sqrt"], "max_depth": [3],
                        "criterion": ["gini"]}},
}


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    cfg = json.loads(json.dumps(CONFIG))
    del cfg["scenario"]["network"]
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_pipeline(workdir):
    assert main(["simulate", "--config", "cfg.json", "--out", "d.csv"]) == 0
    assert sorted(set(load_csv("d.csv").user_id)) == [0, 1, 2, 3, 4]
    assert main(["prepare", "--data", "d.csv", "--out-dir", "prep"]) == 0
    header = (workdir / "prep" / "features_BLE.csv").read_text().splitlines()[0].split(",")
    assert len(header) == 2 + 75 + 3
    assert main(["run-mc", "--config", "cfg.json", "--out", "r.csv"]) == 0
    lines = (workdir / "r.csv").read_text().splitlines()
    assert lines[0] == "sensor,model,setting,lambda,draw,precision,recall,f1,accuracy,auc,flip_fraction,flags"
    assert len(lines) == 1 + 2 * 2 * 4
    assert main(["report", "--results", "r.csv", "--out-dir", "rep"]) == 0
    summary = json.loads((workdir / "rep" / "summary.json").read_text())
    assert "GPS/RF/trueGT" in summary["hyperparameters"]


def test_seed_override_changes_output(workdir):
    main(["simulate", "--config", "cfg.json", "--out", "d.csv"])
    main(["run-mc", "--config", "cfg.json", "--out", "a.csv"])
    main(["run-mc", "--config", "cfg.json", "--seed", "8", "--out", "b.csv"])
    assert (workdir / "a.csv").read_bytes() != (workdir / "b.csv").read_bytes()
    main(["simulate", "--config", "cfg.json", "--seed", "2", "--out", "d2.csv"])
    assert (workdir / "d.csv").read_bytes() != (workdir / "d2.csv").read_bytes()


def test_missing_dataset_is_an_error(workdir, caplog):
    assert main(["run-mc", "--config", "cfg.json", "--data", "nope.csv"]) == 2
