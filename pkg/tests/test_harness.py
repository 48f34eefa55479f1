import json
import math

import numpy as np
import pytest

from bibolab.features import build_feature_table
from bibolab.harness import (SETTINGS, ConfigError, ResultTable, RunConfig, aggregate_report,
                             error_sweep, read_results_csv, run_monte_carlo, split_oos,
                             write_report, write_results_csv)
from bibolab.metrics import EvalRecord

TINY_GRID = {"n_estimators": [10], "max_features": ["sqrt"], "max_depth": [3],
             "criterion": ["gini"]}


@pytest.fixture(scope="module")
def tables(small_clean):
    clean = small_clean[0]
    return {s: build_feature_table(clean, s) for s in ("BLE", "GPS")}


def tiny(**kw):
    base = dict(sensors=("GPS",), models=("RF",), lambdas=(0.5,), draws=1, seed=3,
                rf_grid=TINY_GRID, k_folds=2)
    base.update(kw)
    return RunConfig(**base)


def test_split_twelve_users():
    tr, va = split_oos(np.arange(12), 0.2, np.random.default_rng(0))
    assert va.size == 2 and tr.size == 10


def test_split_floor_rule():
    _, va = split_oos(np.arange(12), 0.0, np.random.default_rng(0))
    assert va.size == 2


def test_split_disjoint_over_seeds():
    users = np.arange(12)
    for seed in range(1000):
        tr, va = split_oos(users, 0.2, np.random.default_rng(seed))
        assert not set(tr) & set(va) and set(tr) | set(va) == set(users)


def test_split_too_few_users():
    with pytest.raises(ValueError):
        split_oos([1], 0.2)
    with pytest.raises(ValueError):
        split_oos([1, 2], 0.2)


def test_sweep_values():
    assert error_sweep() == [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
    assert error_sweep(include_zero=True)[0] == 0.0
    with pytest.raises(ConfigError):
        error_sweep(0.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(draws=0)
    with pytest.raises(ConfigError):
        RunConfig(lambdas=(1.0, 0.5))
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"colour": 1})


def test_one_draw_one_lambda_four_records(small_clean, tables):
    t = run_monte_carlo(tiny(), tables)
    assert [r.setting for r in t.records] == list(SETTINGS)
    assert all(r.lam == 0.5 and r.draw == 0 for r in t.records)


def test_zero_lambda_control(tables):
    t = run_monte_carlo(tiny(lambdas=(0.0, 1.0), draws=2), tables)
    for c in range(2):
        cell = {r.setting: r for r in t.records if r.lam == 0.0 and r.draw == c}
        a, b = cell["trueGT/trueGT"], cell["flipGT/flipGT"]
        assert (a.precision, a.recall, a.f1, a.accuracy, a.auc) == \
               (b.precision, b.recall, b.f1, b.accuracy, b.auc)
    rep = aggregate_report(t)
    assert [b["bias"] for b in rep["bias"] if b["lambda"] == 0.0] == [0.0]


def test_hyperparameters_frozen_across_draws(tables):
    t = run_monte_carlo(tiny(lambdas=(0.5, 1.0), draws=3,
                             rf_grid={**TINY_GRID, "n_estimators": [10, 20]}), tables)
    for mode in ("trueGT", "flipGT"):
        used = [cfg for (_, _, m, lam, c, cfg) in t.params_used if m == mode]
        logged = t.hyperparameters[f"GPS/RF/{mode}"]
        assert used and all(u == logged for u in used)


def test_factorial_coverage_and_replay(tables, tmp_path):
    cfg = tiny(sensors=("BLE", "GPS"), lambdas=(0.5, 1.0), draws=2, extra_settings=True)
    a = run_monte_carlo(cfg, tables)
    b = run_monte_carlo(cfg, tables)
    keys = {(r.sensor, r.model, r.setting, r.lam, r.draw) for r in a.records}
    assert len(keys) == len(a.records) == 2 * 6 * 2 * 2
    write_results_csv(a, tmp_path / "a.csv")
    write_results_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    back = read_results_csv(tmp_path / "a.csv")
    assert [(r.setting, r.auc) for r in back.records] == [(r.setting, r.auc) for r in a.records]


def test_lineage_recorded(tables):
    t = run_monte_carlo(tiny(), tables)
    assert t.records[0].lineage["master_seed"] == 3


def rec(auc, lam=0.5, setting="trueGT/trueGT", draw=0):
    return EvalRecord("BLE", "RF", setting, lam, draw, 0.5, 0.5, 0.5, 0.5, 0.1, auc, 0.1)


def test_single_row_report():
    r = aggregate_report(ResultTable([rec(0.8)]))
    c = r["cells"][0]
    assert c["auc"]["mean"] == 0.8 and c["auc"]["std"] == 0.0 and c["n_draws"] == 1


def test_report_statistics_and_exclusion(tmp_path):
    rows = [rec(a, draw=i) for i, a in enumerate([0.6, 0.7, 0.8])] + [rec(math.nan, draw=3)]
    r = aggregate_report(ResultTable(rows))
    c = r["cells"][0]
    assert c["auc"]["mean"] == pytest.approx(0.7)
    assert c["auc"]["std"] == pytest.approx(0.1)
    assert c["n_excluded"] == 1
    lo, hi = c["auc"]["ci95"]
    assert lo < 0.7 < hi and hi - 0.7 == pytest.approx(4.302652729911275 * 0.1 / math.sqrt(3))
    js, cv = write_report(r, tmp_path)
    json.loads(js.read_text())
    assert cv.read_text().startswith("sensor,model,setting,lambda,auc_mean")


def test_bias_curve_sign():
    rows = [rec(0.7, 1.0, "flipGT/flipGT"), rec(0.9, 1.0, "flipGT-trained/trueGT-eval")]
    b = aggregate_report(ResultTable(rows))["bias"][0]
    assert b["bias"] == pytest.approx(-0.2) and b["mean_abs_draw_bias"] == pytest.approx(0.2)


def test_empty_report_rejected():
    with pytest.raises(ValueError):
        aggregate_report(ResultTable())


def test_config_from_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 5, "run": {"dataset": "d.csv", "draws": 2}}))
    cfg = RunConfig.from_json(p)
    assert cfg.seed == 5 and cfg.draws == 2 and cfg.dataset == str(tmp_path / "d.csv")
