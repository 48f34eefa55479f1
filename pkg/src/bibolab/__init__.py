"""Be-in/be-out detection from BLE and GPS traces under noisy ground truth."""

from .dataset import Dataset, clean_dataset, load_csv, save_csv
from .metrics import BI, BO, EvalRecord, auc, confusion, prf1a
from .noise import FlipAssumption, NoiseSpec, flip_dataset, flip_labels
from .scenario import RssiModel, default_network, simulate_scenario

__version__ = "0.1.0"
