"""Configurations, trained-model wrapper, baselines and persistence."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .forest import RandomForest
from .mlp import MLP, n_params

RF, MLP_KIND, RANDOM, MAJORITY = "RF", "MLP", "RANDOM", "MAJORITY"
KINDS = (RF, MLP_KIND, RANDOM, MAJORITY)
FORMAT_VERSION = 1

RF_GRID = {
    "n_estimators": (10, 20, 100, 200, 500),
    "max_features": ("auto", "sqrt", "log2"),
    "max_depth": (3, 4, 6, 7, 8),
    "criterion": ("gini", "entropy"),
}
MLP_GRID = {
    "hidden": ((50,), (10, 50, 10), (10, 50, 50, 10)),
    "lr_schedule": ("constant", "invscaling"),
    "lr": (1e-2, 1e-3),
}


class SchemaMismatch(ValueError):
    pass


@dataclass(frozen=True)
class RfConfig:
    n_estimators: int = 100
    max_features: str = "sqrt"  # "auto" and "all" both mean every feature
    max_depth: int = 8
    criterion: str = "gini"
    seed: int = 0

    def validate(self):
        if self.n_estimators < 1 or self.max_depth < 1:
            raise ValueError("n_estimators and max_depth must be >= 1")
        if self.max_features not in ("auto", "all", "sqrt", "log2"):
            raise ValueError(f"unknown max_features {self.max_features!r}")
        if self.criterion not in ("gini", "entropy"):
            raise ValueError(f"unknown criterion {self.criterion!r}")

    @property
    def in_grid(self) -> bool:
        return all(getattr(self, k) in v for k, v in RF_GRID.items())


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple = (50,)
    lr_schedule: str = "constant"
    lr: float = 1e-3
    max_epochs: int = 500
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def validate(self):
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden layer sizes must be positive")
        if self.lr_schedule not in ("constant", "invscaling"):
            raise ValueError(f"unknown schedule {self.lr_schedule!r}")
        if self.lr <= 0 or self.max_epochs < 0 or self.batch_size < 1:
            raise ValueError("bad learning rate, epoch count or batch size")

    @property
    def in_grid(self) -> bool:
        return all(getattr(self, k) in v for k, v in MLP_GRID.items())


class RandomScores:
    """i.i.d. uniform scores, reproducible per seed and row count."""

    def __init__(self, seed=0):
        self.seed = int(seed)

    def predict_proba(self, X):
        return np.random.default_rng(self.seed).random(len(X))


class ConstantScore:
    def __init__(self, value):
        self.value = float(value)

    def predict_proba(self, X):
        return np.full(len(X), self.value)


@dataclass(eq=False)
class TrainedModel:
    kind: str
    estimator: object
    columns: tuple
    config: dict = field(default_factory=dict)
    flags: tuple = ()

    @property
    def degenerate(self) -> bool:
        return "degenerate" in self.flags

    def check_columns(self, columns):
        if columns is None:
            return
        columns = tuple(columns)
        for i, (a, b) in enumerate(zip(self.columns, columns)):
            if a != b:
                raise SchemaMismatch(f"column {i} is {b!r}, model was trained on {a!r}")
        if len(columns) != len(self.columns):
            i = min(len(columns), len(self.columns))
            name = (self.columns + columns)[i] if len(columns) < len(self.columns) else columns[i]
            raise SchemaMismatch(f"column {i} ({name!r}) is missing or unexpected; "
                                 f"model expects {len(self.columns)} columns, got {len(columns)}")

    def predict_proba(self, X, columns=None):
        """Class-1 probability per row; ``X`` may be a FeatureTable."""
        if hasattr(X, "columns") and hasattr(X, "X"):
            columns, X = X.columns, X.X
        self.check_columns(columns)
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or (self.columns and X.shape[1] != len(self.columns)):
            raise SchemaMismatch(f"expected {len(self.columns)} feature columns, got shape {X.shape}")
        return np.clip(self.estimator.predict_proba(X), 0.0, 1.0)

    def predict(self, X, columns=None):
        return (self.predict_proba(X, columns) > 0.5).astype(np.int64)


def predict_proba(model: TrainedModel, features, columns=None):
    return model.predict_proba(features, columns)


def _columns(X, columns):
    if columns is None:
        return tuple(f"x{i}" for i in range(np.shape(X)[1]))
    return tuple(columns)


def _single_class(y):
    classes = np.unique(y)
    return classes.size < 2, (float(classes[0]) if classes.size else 0.0)


def train_rf(X, y, config: RfConfig = RfConfig(), columns=None) -> TrainedModel:
    config.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.shape[0] < 2:
        raise ValueError("need at least 2 training rows")
    rf = RandomForest(config.n_estimators, config.max_features, config.max_depth,
                      config.criterion, seed=config.seed).fit(X, y)
    flags = ("degenerate",) if rf.degenerate_ else ()
    return TrainedModel(RF, rf, _columns(X, columns), asdict(config), flags)


def train_mlp(X, y, config: MlpConfig = MlpConfig(), columns=None) -> TrainedModel:
    config.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    single, value = _single_class(y)
    if single:
        return TrainedModel(MLP_KIND, ConstantScore(value), _columns(X, columns),
                            asdict(config), ("degenerate",))
    mlp = MLP(config.hidden, config.lr_schedule, config.lr, config.max_epochs,
              config.batch_size, seed=config.seed).fit(X, y)
    return TrainedModel(MLP_KIND, mlp, _columns(X, columns), asdict(config))


def train_random(X, seed=0, columns=None) -> TrainedModel:
    return TrainedModel(RANDOM, RandomScores(seed), _columns(X, columns), {"seed": int(seed)})


def train_majority(X, y, columns=None) -> TrainedModel:
    """Constant predictor of the most frequent class (ties go to class 1)."""
    y = np.asarray(y)
    value = 1.0 if 2 * np.count_nonzero(y == 1) >= y.size else 0.0
    return TrainedModel(MAJORITY, ConstantScore(value), _columns(X, columns), {"value": value})


def train(kind, X, y, config=None, columns=None) -> TrainedModel:
    if kind == RF:
        return train_rf(X, y, config or RfConfig(), columns)
    if kind == MLP_KIND:
        return train_mlp(X, y, config or MlpConfig(), columns)
    if kind == RANDOM:
        return train_random(X, getattr(config, "seed", 0), columns)
    if kind == MAJORITY:
        return train_majority(X, y, columns)
    raise ValueError(f"unknown model kind {kind!r}")


def complexity(kind, config, n_features=0):
    """Sort key used to break ties between equally scoring configurations."""
    if kind == RF:
        return (config.n_estimators, config.max_depth)
    if kind == MLP_KIND:
        return (n_params(config.hidden, n_features),)
    return (0,)


# ---------------------------------------------------------------------------
# persistence: one .npz holding the arrays plus a JSON "meta" entry


def save_model(model: TrainedModel, path) -> None:
    meta = {"format_version": FORMAT_VERSION, "kind": model.kind, "columns": list(model.columns),
            "config": model.config, "flags": list(model.flags)}
    est = model.estimator
    arrays = {}
    if isinstance(est, (RandomForest, MLP)):
        meta["estimator"] = type(est).__name__
        meta["state"], arrays = est.get_state()
    elif isinstance(est, RandomScores):
        meta["estimator"], meta["state"] = "RandomScores", {"seed": est.seed}
    else:
        meta["estimator"], meta["state"] = "ConstantScore", {"value": est.value}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)),
                 **{f"a_{k}": v for k, v in arrays.items()})


def load_model(path) -> TrainedModel:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        arrays = {k[2:]: z[k] for k in z.files if k.startswith("a_")}
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format {meta.get('format_version')!r}")
    name, state = meta["estimator"], meta["state"]
    if name == "RandomForest":
        est = RandomForest.from_state(state, arrays)
    elif name == "MLP":
        est = MLP.from_state(state, arrays)
    elif name == "RandomScores":
        est = RandomScores(state["seed"])
    else:
        est = ConstantScore(state["value"])
    return TrainedModel(meta["kind"], est, tuple(meta["columns"]), meta["config"], tuple(meta["flags"]))
