"""Classifiers: random forest, MLP, random and majority baselines, grid search."""

from .core import (
    FORMAT_VERSION, KINDS, MAJORITY, MLP_GRID, MLP_KIND, RANDOM, RF, RF_GRID, MlpConfig,
    RfConfig, SchemaMismatch, TrainedModel, complexity, load_model, predict_proba, save_model,
    train, train_majority, train_mlp, train_random, train_rf,
)
from .forest import RandomForest
from .mlp import MLP, TrainingDiverged
from .search import CvRow, GridResult, expand_grid, grid_search, group_kfold, make_config

__all__ = [
    "FORMAT_VERSION", "KINDS", "MAJORITY", "MLP_GRID", "MLP_KIND", "RANDOM", "RF", "RF_GRID",
    "MlpConfig", "RfConfig", "SchemaMismatch", "TrainedModel", "complexity", "load_model",
    "predict_proba", "save_model", "train", "train_majority", "train_mlp", "train_random",
    "train_rf", "RandomForest", "MLP", "TrainingDiverged", "CvRow", "GridResult",
    "expand_grid", "grid_search", "group_kfold", "make_config",
]
