"""Corrupt the ground truth with the one-flip and full-flip assumptions and
compare true-label and blind evaluation of a forest trained on the noisy labels.

Run with ``python3 demos/02_label_noise.py``.
"""

import numpy as np

from bibolab.dataset import Dataset
from bibolab.harness import draw_split, prepare_tables
from bibolab.metrics import auc
from bibolab.models import RfConfig, train_rf
from bibolab.noise import NoiseSpec, flip_dataset
from bibolab.scenario import RssiModel, default_network, simulate_scenario

SEED = 2022

points = simulate_scenario(default_network(), RssiModel(), n_users=12, seed=SEED)
_, tables = prepare_tables(Dataset.from_points(points), ("BLE",))
table = tables["BLE"]
train_users, val_users = draw_split(np.unique(table.user_id), 0.2, SEED, 0)
tr_mask = np.isin(table.user_id, train_users)
va_mask = ~tr_mask

print("assumption   lam  flipped  AUC(true)  AUC(blind)")
for assumption in ("one-flip", "full-flip"):
    for lam in (0.0, 1.0, 3.0):
        spec = NoiseSpec(assumption, lam, seed=SEED)
        noisy, _, frac = flip_dataset(table.label, table.user_id, table.segment_id, spec)
        model = train_rf(table.X[tr_mask], noisy[tr_mask], RfConfig(n_estimators=100), table.columns)
        s = model.predict_proba(table.X[va_mask])
        print(f"{assumption:<11} {lam:4.1f}  {frac:7.2%}  {auc(table.label[va_mask], s):9.3f}"
              f"  {auc(noisy[va_mask], s):10.3f}")
