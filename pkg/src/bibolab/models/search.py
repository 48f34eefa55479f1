"""Exhaustive hyperparameter search with user-grouped k-fold cross-validation.

Folds never split a user: every user's rows land in exactly one fold. The
best configuration has the highest mean fold AUC; exact ties go to the
lower-complexity configuration, then to the earlier grid position.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..metrics import auc
from .core import MLP_GRID, MLP_KIND, RF, RF_GRID, MlpConfig, RfConfig, complexity, train
from .forest import RandomForest


def group_kfold(groups, k=5, seed=0):
    """List of ``(train_rows, test_rows)``; users are shuffled then dealt round-robin."""
    groups = np.asarray(groups)
    users = np.unique(groups)
    if users.size < 2:
        raise ValueError("need at least 2 users for grouped folds")
    k = min(int(k), users.size)
    rng = np.random.default_rng(seed)
    users = users[rng.permutation(users.size)]
    folds = []
    for f in range(k):
        test = np.isin(groups, users[f::k])
        folds.append((np.flatnonzero(~test), np.flatnonzero(test)))
    return folds


def expand_grid(grid: dict) -> list[dict]:
    keys = list(grid)
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def make_config(kind, params: dict, seed=0, **extra):
    if kind == RF:
        return RfConfig(seed=seed, **params)
    if kind == MLP_KIND:
        return MlpConfig(seed=seed, **{**params, **extra})
    raise ValueError(f"grid search supports RF and MLP, not {kind!r}")


@dataclass
class CvRow:
    config: object
    fold_auc: list
    mean_auc: float
    flags: tuple = ()


@dataclass
class GridResult:
    best: object
    best_score: float
    table: list = field(default_factory=list)


def _score_folds(fold_aucs):
    a = np.asarray(fold_aucs, dtype=np.float64)
    ok = ~np.isnan(a)
    flags = ("fold_missing_class",) if not ok.all() else ()
    mean = float(a[ok].mean()) if ok.any() else float("nan")
    return mean, flags


def _rf_fold_aucs(X, y, folds, configs, seed):
    """AUC per fold for every RF config, growing one forest per
    (max_features, criterion, fold) and reading every smaller forest off it."""
    out = {i: [np.nan] * len(folds) for i in range(len(configs))}
    by_family = {}
    for i, c in enumerate(configs):
        by_family.setdefault((c.max_features, c.criterion), []).append(i)
    for (mf, crit), members in by_family.items():
        n_max = max(configs[i].n_estimators for i in members)
        d_max = max(configs[i].max_depth for i in members)
        depths = sorted({configs[i].max_depth for i in members})
        counts = sorted({configs[i].n_estimators for i in members})
        for f, (tr, te) in enumerate(folds):
            if np.unique(y[te]).size < 2:
                continue
            rf = RandomForest(n_max, mf, d_max, crit, seed=seed).fit(X[tr], y[tr])
            P = rf.predict_grid(X[te], depths, counts)
            for i in members:
                c = configs[i]
                out[i][f] = auc(y[te], P[depths.index(c.max_depth), counts.index(c.n_estimators)])
    return [out[i] for i in range(len(configs))]


def grid_search(X, y, groups, kind=RF, grid=None, k=5, seed=0, **extra) -> GridResult:
    """Evaluate every grid point by grouped k-fold AUC and pick the best.

    Parameters
    ----------
    X, y : training features and {0, 1} labels
    groups : user id per row; folds are split by user
    kind : "RF" or "MLP"
    grid : dict of axis -> values; defaults to the standard grid of ``kind``
    seed : seeds both the fold assignment and every model
    extra : fixed MLP settings outside the grid (``max_epochs``, ``batch_size``)
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    for cls in (0, 1):
        if np.count_nonzero(y == cls) < k:
            raise ValueError(f"class {cls} has fewer than k={k} rows")
    grid = grid if grid is not None else (RF_GRID if kind == RF else MLP_GRID)
    configs = [make_config(kind, p, seed, **extra) for p in expand_grid(grid)]
    folds = group_kfold(groups, k, seed)
    if kind == RF:
        fold_aucs = _rf_fold_aucs(X, y, folds, configs, seed)
    else:
        fold_aucs = []
        for c in configs:
            row = []
            for tr, te in folds:
                if np.unique(y[te]).size < 2:
                    row.append(np.nan)
                    continue
                model = train(kind, X[tr], y[tr], c)
                row.append(auc(y[te], model.predict_proba(X[te])))
            fold_aucs.append(row)
    table = []
    for c, fa in zip(configs, fold_aucs):
        mean, flags = _score_folds(fa)
        table.append(CvRow(c, [float(a) for a in fa], mean, flags))
    scored = [(i, r) for i, r in enumerate(table) if not np.isnan(r.mean_auc)]
    if not scored:
        raise ValueError("no fold could be scored")
    i_best, best = min(scored, key=lambda ir: (-ir[1].mean_auc,
                                               complexity(kind, ir[1].config, X.shape[1]), ir[0]))
    return GridResult(best.config, best.mean_auc, table)
