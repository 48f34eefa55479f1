"""Monte-Carlo experiment over ground-truth error rates.

For every error rate ``lam`` in the sweep and every draw ``C``:

1. flip the labels of every user (Poisson error count per user),
2. split users into training and validation sides,
3. train one model on the true labels and one on the flipped labels,
4. score the validation rows in four settings:

   ``trueGT/trueGT``               true-label model, true labels
   ``flipGT/flipGT``               flipped-label model, flipped labels
   ``flipGT-trained/trueGT-eval``  flipped-label model, true labels
   ``random/trueGT``               uniform random scores, true labels

Hyperparameters are chosen once per (sensor, model, label mode) by grouped
grid search on the training users of the first draw and frozen for the
rest of the run. All randomness derives from the master seed through
``SeedSequence`` spawn keys, so the output is a pure function of the
configuration:

* user split      ``(1, C)``             shared by every lam
* label flips     ``(2, lam_key, C)``
* model training  ``(3, C, sensor, model)`` shared by both label modes
* random scores   ``(4, C, sensor)``
* grid search     ``(5, sensor, model)``

A lam of 0 flips nothing, so the flipped-label model is the true-label
model and the two label modes give identical metrics.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats

from .dataset import clean_dataset, load_csv
from .features import build_feature_table
from .imputation import EwmaParams
from .metrics import EvalRecord, evaluate
from .models import MLP_KIND, RF, MlpConfig, RfConfig, grid_search, train
from .noise import FlipAssumption, NoiseSpec, flip_dataset

SETTINGS = ("trueGT/trueGT", "flipGT/flipGT", "flipGT-trained/trueGT-eval", "random/trueGT")
EXTRA_SETTINGS = ("trueGT-trained/flipGT-eval", "os-activity/trueGT")
RESULT_COLUMNS = ("sensor", "model", "setting", "lambda", "draw", "precision", "recall", "f1",
                  "accuracy", "auc", "flip_fraction", "flags")
SENSORS = ("BLE", "GPS")
SENSOR_KEY = {"BLE": 0, "GPS": 1}
MODEL_KEY = {RF: 0, MLP_KIND: 1}
METRICS = ("precision", "recall", "f1", "accuracy", "auc", "flip_fraction")


class ConfigError(ValueError):
    pass


def error_sweep(start=0.5, step=0.5, max_err=3.0, include_zero=False) -> list[float]:
    """``start, start+step, ...`` up to ``max_err`` inclusive, optionally led by 0."""
    if start <= 0 or step <= 0 or max_err < start:
        raise ConfigError("sweep needs start > 0, step > 0 and max_err >= start")
    n = int(math.floor((max_err - start) / step + 1e-9)) + 1
    lams = [round(start + i * step, 10) for i in range(n)]
    return ([0.0] if include_zero else []) + lams


@dataclass
class RunConfig:
    dataset: str = ""
    sensors: tuple = SENSORS
    models: tuple = (RF,)
    assumption: str = "one-flip"
    lam_start: float = 0.5
    lam_step: float = 0.5
    max_err: float = 3.0
    include_zero: bool = False
    lambdas: tuple = None  # explicit sweep; overrides start/step/max_err
    draws: int = 100
    val_fraction: float = 0.2
    seed: int = 0
    k_folds: int = 5
    extra_settings: bool = False
    rf_grid: dict = None  # None means the standard grid
    mlp_grid: dict = None
    mlp_max_epochs: int = 500
    imputation: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sensors = tuple(self.sensors)
        self.models = tuple(self.models)
        FlipAssumption(self.assumption)
        if not self.sensors or set(self.sensors) - set(SENSORS):
            raise ConfigError(f"sensors must be a non-empty subset of {SENSORS}")
        if not self.models or set(self.models) - {RF, MLP_KIND}:
            raise ConfigError("models must be a non-empty subset of {'RF', 'MLP'}")
        if self.draws < 1:
            raise ConfigError("draws must be >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("validation fraction must lie in [0, 1)")
        if self.lambdas is not None:
            self.lambdas = tuple(float(v) for v in self.lambdas)
            if not self.lambdas or any(v < 0 for v in self.lambdas) or any(
                    b <= a for a, b in zip(self.lambdas, self.lambdas[1:])):
                raise ConfigError("lambdas must be non-negative and strictly increasing")
        else:
            error_sweep(self.lam_start, self.lam_step, self.max_err)

    @property
    def sweep(self) -> list[float]:
        if self.lambdas is not None:
            return list(self.lambdas)
        return error_sweep(self.lam_start, self.lam_step, self.max_err, self.include_zero)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown run option(s): {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        raw = json.loads(Path(path).read_text())
        d = dict(raw.get("run", raw))
        if "seed" in raw and "run" in raw and "seed" not in d:
            d["seed"] = raw["seed"]
        base = Path(path).parent
        if d.get("dataset") and not Path(d["dataset"]).is_absolute():
            d["dataset"] = str(base / d["dataset"])
        return cls.from_dict(d)


def _stream(master, *key):
    return np.random.default_rng(np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key)))


def _seed(master, *key) -> int:
    return int(_stream(master, *key).integers(0, 2**31 - 1))


def _lam_key(lam) -> int:
    return int(round(lam * 1000))


def split_oos(users, fraction=0.2, rng=None):
    """Randomly pick ``max(2, round(fraction * N))`` validation users (halves round up).

    Returns sorted ``(train_users, validation_users)`` arrays.
    """
    users = np.unique(np.asarray(users))
    if users.size < 2:
        raise ValueError("need at least 2 users to split")
    n_val = max(2, int(math.floor(fraction * users.size + 0.5)))
    if n_val >= users.size:
        raise ValueError(f"{users.size} users leave none for training after taking {n_val}")
    rng = np.random.default_rng() if rng is None else rng
    val = np.sort(rng.choice(users, size=n_val, replace=False))
    train_users = np.setdiff1d(users, val)
    return train_users, val


def draw_split(users, fraction, master, draw):
    """The user split of draw ``draw`` under master seed ``master``."""
    return split_oos(users, fraction, _stream(master, 1, draw))


def _config_dict(cfg):
    d = {k: v for k, v in vars(cfg).items() if k != "seed"} if cfg is not None else {}
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


@dataclass
class ResultTable:
    records: list = field(default_factory=list)
    hyperparameters: dict = field(default_factory=dict)  # "sensor/model/mode" -> config
    params_used: list = field(default_factory=list)  # (sensor, model, mode, lam, draw, config)
    flip_reports: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)


def _flags(rec):
    return ";".join(rec.flags)


def write_results_csv(table, path) -> None:
    records = table.records if isinstance(table, ResultTable) else table
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in records:
            w.writerow([r.sensor, r.model, r.setting, repr(float(r.lam)), r.draw,
                        *(repr(float(getattr(r, m))) for m in ("precision", "recall", "f1",
                                                               "accuracy", "auc", "flip_fraction")),
                        _flags(r)])


def read_results_csv(path) -> ResultTable:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            records.append(EvalRecord(
                sensor=row["sensor"], model=row["model"], setting=row["setting"],
                lam=float(row["lambda"]), draw=int(row["draw"]),
                precision=float(row["precision"]), recall=float(row["recall"]),
                f1=float(row["f1"]), accuracy=float(row["accuracy"]), fpr=float("nan"),
                auc=float(row["auc"]), flip_fraction=float(row["flip_fraction"]),
                flags=tuple(f for f in row["flags"].split(";") if f),
            ))
    return ResultTable(records)


def prepare_tables(dataset, sensors=SENSORS, imputation: dict | None = None):
    """Clean a dataset (path or Dataset) and build one feature table per sensor."""
    ds = load_csv(dataset) if isinstance(dataset, (str, Path)) else dataset
    clean, segments, _ = clean_dataset(ds)
    params = EwmaParams(**(imputation or {}))
    return clean, {s: build_feature_table(clean, s, params) for s in sensors}


def _model_config(kind, best, seed, config: RunConfig):
    if kind == RF:
        return RfConfig(best.n_estimators, best.max_features, best.max_depth, best.criterion, seed)
    return MlpConfig(best.hidden, best.lr_schedule, best.lr, best.max_epochs, best.batch_size, seed)


def run_monte_carlo(config: RunConfig, tables: dict | None = None, progress=None) -> ResultTable:
    """Run the sweep; ``tables`` maps sensor -> FeatureTable (built from
    ``config.dataset`` when omitted)."""
    if tables is None:
        if not config.dataset:
            raise ConfigError("no dataset given")
        _, tables = prepare_tables(config.dataset, config.sensors, config.imputation)
    master = config.seed
    lams = config.sweep
    settings = SETTINGS + (EXTRA_SETTINGS if config.extra_settings else ())
    assumption = FlipAssumption(config.assumption)
    ref = tables[config.sensors[0]]
    users = np.unique(ref.user_id)
    for s in config.sensors:
        t = tables[s]
        if not (np.array_equal(t.user_id, ref.user_id) and np.array_equal(t.label, ref.label)
                and np.array_equal(t.segment_id, ref.segment_id)):
            raise ConfigError("feature tables of different sensors must share rows")
    true = ref.label.astype(np.int64)

    splits = [draw_split(users, config.val_fraction, master, c) for c in range(config.draws)]
    flips = {}

    def flipped(lam, c):
        if (lam, c) not in flips:
            if lam == 0:
                flips[(lam, c)] = (true, [], 0.0)
            else:
                spec = NoiseSpec(assumption, lam, _seed(master, 2, _lam_key(lam), c))
                flips[(lam, c)] = flip_dataset(true, ref.user_id, ref.segment_id, spec)
        return flips[(lam, c)]

    out = ResultTable()
    first_pos = next((lam for lam in lams if lam > 0), None)
    for sensor in config.sensors:
        tab = tables[sensor]
        for kind in config.models:
            grid = config.rf_grid if kind == RF else config.mlp_grid
            extra = {} if kind == RF else {"max_epochs": config.mlp_max_epochs}
            if kind == MLP_KIND and grid is not None:
                grid = {k: [tuple(v) if isinstance(v, list) else v for v in vals]
                        for k, vals in grid.items()}
            tr_users, _ = splits[0]
            tr0 = np.isin(tab.user_id, tr_users)
            gseed = _seed(master, 5, SENSOR_KEY[sensor], MODEL_KEY[kind])
            frozen = {}
            label_sets = {"trueGT": true}
            if first_pos is not None:
                label_sets["flipGT"] = flipped(first_pos, 0)[0]
            for mode, labels in label_sets.items():
                g = grid_search(tab.X[tr0], labels[tr0], tab.user_id[tr0], kind, grid,
                                config.k_folds, gseed, **extra)
                frozen[mode] = g.best
                out.hyperparameters[f"{sensor}/{kind}/{mode}"] = _config_dict(g.best)
            if "flipGT" not in frozen:
                frozen["flipGT"] = frozen["trueGT"]

            true_cache = {}
            for lam in lams:
                for c in range(config.draws):
                    tr_users, val_users = splits[c]
                    tr = np.isin(tab.user_id, tr_users)
                    va = np.isin(tab.user_id, val_users)
                    if np.intersect1d(tab.user_id[tr], tab.user_id[va]).size:
                        raise AssertionError(f"user overlap in draw {c}")
                    mseed = _seed(master, 3, c, SENSOR_KEY[sensor], MODEL_KEY[kind])
                    if c not in true_cache:
                        cfg = _model_config(kind, frozen["trueGT"], mseed, config)
                        m = train(kind, tab.X[tr], true[tr], cfg, tab.columns)
                        true_cache[c] = (m.predict_proba(tab.X[va]), m.flags)
                        out.params_used.append((sensor, kind, "trueGT", lam, c, _config_dict(cfg)))
                    p_true, f_true = true_cache[c]
                    fl, reports, frac = flipped(lam, c)
                    if sensor == config.sensors[0] and kind == config.models[0]:
                        out.flip_reports.append((lam, c, frac))
                    if lam == 0:
                        p_flip, f_flip = p_true, f_true
                        cfg = _model_config(kind, frozen["trueGT"], mseed, config)
                    else:
                        cfg = _model_config(kind, frozen["flipGT"], mseed, config)
                        m = train(kind, tab.X[tr], fl[tr], cfg, tab.columns)
                        p_flip, f_flip = m.predict_proba(tab.X[va]), m.flags
                    out.params_used.append((sensor, kind, "flipGT", lam, c, _config_dict(cfg)))
                    p_rand = _stream(master, 4, c, SENSOR_KEY[sensor]).random(int(va.sum()))
                    cells = {
                        "trueGT/trueGT": (true[va], p_true, f_true),
                        "flipGT/flipGT": (fl[va], p_flip, f_flip),
                        "flipGT-trained/trueGT-eval": (true[va], p_flip, f_flip),
                        "random/trueGT": (true[va], p_rand, ()),
                        "trueGT-trained/flipGT-eval": (fl[va], p_true, f_true),
                        "os-activity/trueGT": (true[va], tab.os_activity[va].astype(np.float64), ()),
                    }
                    lineage = {"master_seed": master, "split_key": (1, c),
                               "flip_key": (2, _lam_key(lam), c),
                               "model_key": (3, c, SENSOR_KEY[sensor], MODEL_KEY[kind])}
                    for setting in settings:
                        labels, scores, mflags = cells[setting]
                        rec = evaluate(labels, scores, sensor=sensor, model=kind, setting=setting,
                                       lam=lam, draw=c, flip_fraction=frac, lineage=lineage)
                        if "degenerate" in mflags:
                            rec.flags = rec.flags + ("degenerate_model",)
                        out.records.append(rec)
                if progress:
                    progress(sensor, kind, lam)
    return out


# ---------------------------------------------------------------------------
# aggregation


def _summary(values):
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    mean = float(v.mean())
    std = float(v.std(ddof=1)) if n > 1 else 0.0
    if n > 1:
        half = float(stats.t.ppf(0.975, n - 1) * std / math.sqrt(n))
    else:
        half = 0.0
    return {"mean": mean, "std": std, "ci95": [mean - half, mean + half], "n": n}


def _p_greater(values, mu=0.5):
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2 or np.all(v == v[0]):
        return float("nan")
    return float(stats.ttest_1samp(v, mu, alternative="greater").pvalue)


def aggregate_report(table: ResultTable) -> dict:
    """Per (sensor, model, setting, lam) statistics, the blind-evaluation
    bias curve and the realised flip fraction per lam.

    Records without a defined AUC (single-class validation sets) are left
    out of the AUC statistics and counted in ``n_excluded``.
    """
    records = table.records if isinstance(table, ResultTable) else list(table)
    if not records:
        raise ValueError("empty result table")
    cells = {}
    for r in records:
        cells.setdefault((r.sensor, r.model, r.setting, float(r.lam)), []).append(r)
    out_cells = []
    for (sensor, model, setting, lam), rows in cells.items():
        entry = {"sensor": sensor, "model": model, "setting": setting, "lambda": lam}
        for m in METRICS:
            vals = [getattr(r, m) for r in rows]
            vals = [v for v in vals if not math.isnan(v)]
            entry[m] = _summary(vals) if vals else None
        aucs = [r.auc for r in rows if not math.isnan(r.auc)]
        entry["n_draws"] = len(rows)
        entry["n_excluded"] = len(rows) - len(aucs)
        entry["auc_p_greater_0.5"] = _p_greater(aucs)
        out_cells.append(entry)

    bias = []
    by_key = {(c["sensor"], c["model"], c["setting"], c["lambda"]): c for c in out_cells}
    for (sensor, model, setting, lam), c in by_key.items():
        if setting != "flipGT/flipGT":
            continue
        other = by_key.get((sensor, model, "flipGT-trained/trueGT-eval", lam))
        if other is None or c["auc"] is None or other["auc"] is None:
            continue
        blind = {r.draw: r.auc for r in cells[(sensor, model, setting, lam)]}
        true_eval = {r.draw: r.auc for r in cells[(sensor, model, "flipGT-trained/trueGT-eval", lam)]}
        diffs = [blind[d] - true_eval[d] for d in blind
                 if d in true_eval and not (math.isnan(blind[d]) or math.isnan(true_eval[d]))]
        bias.append({"sensor": sensor, "model": model, "lambda": lam,
                     "bias": c["auc"]["mean"] - other["auc"]["mean"],
                     "mean_abs_draw_bias": float(np.mean(np.abs(diffs))) if diffs else float("nan")})
    bias.sort(key=lambda b: (b["sensor"], b["model"], b["lambda"]))

    flip = {}
    for r in records:
        if r.setting == SETTINGS[0]:
            flip.setdefault((r.sensor, r.model, float(r.lam)), []).append(r.flip_fraction)
    flip_curve = [{"sensor": s, "model": m, "lambda": lam, **_summary(v)}
                  for (s, m, lam), v in sorted(flip.items())]
    out_cells.sort(key=lambda c: (c["sensor"], c["model"], c["setting"], c["lambda"]))
    return {"cells": out_cells, "bias": bias, "flip_fraction": flip_curve,
            "hyperparameters": getattr(table, "hyperparameters", {})}


def _json_safe(obj):
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def write_report(summary: dict, out_dir) -> tuple[Path, Path]:
    """``summary.json`` plus ``auc_curves.csv`` (mean AUC and CI per lam)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    js = out_dir / "summary.json"
    js.write_text(json.dumps(_json_safe(summary), indent=2, sort_keys=True) + "\n")
    cv = out_dir / "auc_curves.csv"
    with open(cv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sensor", "model", "setting", "lambda", "auc_mean", "auc_ci_low",
                    "auc_ci_high", "n", "flip_fraction_mean"])
        for c in summary["cells"]:
            a = c["auc"]
            if a is None:
                continue
            w.writerow([c["sensor"], c["model"], c["setting"], repr(c["lambda"]), repr(a["mean"]),
                        repr(a["ci95"][0]), repr(a["ci95"][1]), a["n"],
                        repr(c["flip_fraction"]["mean"])])
    return js, cv
