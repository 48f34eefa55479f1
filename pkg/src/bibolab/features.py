"""Windowed time-series features for the BLE and GPS channels.

Every row gets 14 statistics of each channel over the trailing window
``(t - 10 s, t]``. Windows at the start of a user's series are partial.

====  ==========================================================
 idx  feature
====  ==========================================================
  1   mean
  2   max
  3   min
  4   position of the minimum (0-based index in the window)
  5   position of the maximum
  6   amplitude, max - min
  7   points with ``|x - mean| > std``
  8   points below ``mean - std``
  9   points above ``mean + std``
 10   peaks in the window (strict local maxima)
 11   peaks in the trailing half of the window
 12   peaks above ``mean + std``
 13   mean distance between consecutive peaks, seconds (0 if < 2)
 14   least-squares slope against elapsed seconds
====  ==========================================================

``std`` is the population standard deviation. BLE tables also carry the
window mean of each beacon's presence mask (``mask_rssi_k``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, list_unique_users
from .imputation import EwmaParams, impute_series

N_FEATURES = 14
WINDOW_S = 10.0
EARTH_RADIUS_M = 6_371_000.0
GPS_CHANNELS = ("dist", "bearing", "speed")


def _features_matrix(V, T, t_end, window_s=WINDOW_S):
    """Features of each row of ``V``; NaN entries are left padding.

    V, T : (n, w) values and times, padded on the left with NaN.
    t_end : (n,) time at which each window ends.
    """
    M = ~np.isnan(V)
    cnt = M.sum(axis=1)
    if np.any(cnt == 0):
        raise ValueError("empty window")
    w = V.shape[1]
    pad = w - cnt
    Z = np.where(M, V, 0.0)
    mean = Z.sum(axis=1) / cnt
    vmax = np.where(M, V, -np.inf).max(axis=1)
    vmin = np.where(M, V, np.inf).min(axis=1)
    argmin = np.argmin(np.where(M, V, np.inf), axis=1) - pad
    argmax = np.argmax(np.where(M, V, -np.inf), axis=1) - pad
    dev = np.where(M, V - mean[:, None], 0.0)
    std = np.sqrt((dev ** 2).sum(axis=1) / cnt)
    s = std[:, None]
    beyond = (M & (np.abs(dev) > s)).sum(axis=1)
    below = (M & (V < mean[:, None] - s)).sum(axis=1)
    above = (M & (V > mean[:, None] + s)).sum(axis=1)

    peak = np.zeros(V.shape, dtype=bool)
    if w >= 3:
        with np.errstate(invalid="ignore"):
            mid = V[:, 1:-1]
            peak[:, 1:-1] = (mid > V[:, :-2]) & (mid > V[:, 2:])
    n_peaks = peak.sum(axis=1)
    late = peak & (T > (t_end - window_s / 2.0)[:, None])
    n_late = late.sum(axis=1)
    with np.errstate(invalid="ignore"):
        n_high = (peak & (V > mean[:, None] + s)).sum(axis=1)
    first = np.where(n_peaks > 0, np.where(peak, T, np.inf).min(axis=1), 0.0)
    last = np.where(n_peaks > 0, np.where(peak, T, -np.inf).max(axis=1), 0.0)
    peak_dist = np.where(n_peaks >= 2, (last - first) / np.maximum(n_peaks - 1, 1), 0.0)

    TZ = np.where(M, T, 0.0)
    tmean = TZ.sum(axis=1) / cnt
    tdev = np.where(M, T - tmean[:, None], 0.0)
    sxx = (tdev ** 2).sum(axis=1)
    sxy = (tdev * dev).sum(axis=1)
    slope = np.where(sxx > 0, sxy / np.where(sxx > 0, sxx, 1.0), 0.0)

    return np.column_stack([
        mean, vmax, vmin, argmin, argmax, vmax - vmin,
        beyond, below, above, n_peaks, n_late, n_high, peak_dist, slope,
    ]).astype(np.float64)


def _window_index(times, window_s):
    """Gather matrix for trailing windows over a sorted time vector."""
    n = times.size
    start = np.searchsorted(times, times - window_s, side="right")
    width = int((np.arange(n) - start).max()) + 1 if n else 1
    idx = np.arange(n)[:, None] - (width - 1) + np.arange(width)[None, :]
    valid = idx >= start[:, None]
    return np.where(valid, idx, 0), valid


def rolling_features(times, values, window_s=WINDOW_S):
    """14 features per sample over the trailing window ending at each sample."""
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if np.isnan(values).any():
        raise ValueError("values must be finite; impute gaps first")
    idx, valid = _window_index(times, window_s)
    V = np.where(valid, values[idx], np.nan)
    T = np.where(valid, times[idx], np.nan)
    return _features_matrix(V, T, times, window_s)


def window_features(series, times=None, window_s=WINDOW_S) -> np.ndarray:
    """The 14 features of a single window (default spacing 1 s)."""
    v = np.asarray(series, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("empty window")
    t = np.arange(v.size, dtype=np.float64) if times is None else np.asarray(times, dtype=np.float64)
    return _features_matrix(v[None, :], t[None, :], t[-1:], window_s)[0]


def haversine(lat1, lon1, lat2, lon2):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def initial_bearing(lat1, lon1, lat2, lon2):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    y = np.sin(dlmb) * np.cos(p2)
    x = np.cos(p1) * np.sin(p2) - np.sin(p1) * np.cos(p2) * np.cos(dlmb)
    return np.mod(np.degrees(np.arctan2(y, x)), 360.0)


def gps_kinematics(lat, lon, times):
    """Distance (m), bearing (deg) and speed (m/s) from the previous fix.

    Row 0 and rows whose time step is not positive have no valid predecessor
    and come back as NaN.
    """
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if lat.size < 2:
        raise ValueError("need at least two fixes")
    dist = np.full(lat.shape, np.nan)
    bear = np.full(lat.shape, np.nan)
    speed = np.full(lat.shape, np.nan)
    dt = np.diff(times)
    ok = dt > 0
    d = haversine(lat[:-1], lon[:-1], lat[1:], lon[1:])
    b = initial_bearing(lat[:-1], lon[:-1], lat[1:], lon[1:])
    dist[1:] = np.where(ok, d, np.nan)
    bear[1:] = np.where(ok, b, np.nan)
    speed[1:] = np.where(ok, d / np.where(ok, dt, 1.0), np.nan)
    return dist, bear, speed


def _fill(x):
    """Forward-fill NaNs, then back-fill any leading run."""
    x = x.copy()
    ok = ~np.isnan(x)
    if not ok.any():
        return np.zeros_like(x)
    idx = np.where(ok, np.arange(x.size), 0)
    np.maximum.accumulate(idx, out=idx)
    x = x[idx]
    first = np.flatnonzero(ok)[0]
    x[:first] = x[first]
    return x


@dataclass(eq=False)
class FeatureTable:
    sensor: str
    columns: list
    X: np.ndarray
    user_id: np.ndarray
    timestamp: np.ndarray
    label: np.ndarray
    segment_id: np.ndarray
    os_activity: np.ndarray
    row: np.ndarray  # source dataset row of each feature row

    def __len__(self):
        return self.X.shape[0]

    def subset(self, mask) -> "FeatureTable":
        return FeatureTable(
            self.sensor, self.columns, self.X[mask], self.user_id[mask], self.timestamp[mask],
            self.label[mask], self.segment_id[mask], self.os_activity[mask], self.row[mask],
        )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["user_id", "timestamp_s", *self.columns, "bibo_label", "trip_segment_id",
                        "os_activity"])
            for i in range(len(self)):
                w.writerow([int(self.user_id[i]), repr(float(self.timestamp[i])),
                            *(repr(float(v)) for v in self.X[i]),
                            "BI" if self.label[i] == 1 else "BO", int(self.segment_id[i]),
                            int(self.os_activity[i])])


def feature_columns(sensor: str, n_beacons: int = 5) -> list[str]:
    if sensor == "BLE":
        chans = [f"rssi_{j}" for j in range(n_beacons)]
        cols = [f"f{k}_{c}" for c in chans for k in range(1, N_FEATURES + 1)]
        return cols + [f"mask_{c}" for c in chans]
    if sensor == "GPS":
        return [f"f{k}_{c}" for c in GPS_CHANNELS for k in range(1, N_FEATURES + 1)]
    raise ValueError(f"unknown sensor family {sensor!r}")


def _user_block(dataset, rows, sensor, params, window_s):
    t = dataset.timestamp[rows]
    if sensor == "BLE":
        aug, _ = impute_series(t, dataset.rssi[rows], params)
        blocks = [rolling_features(t, aug.values[:, j], window_s) for j in range(dataset.n_beacons)]
        idx, valid = _window_index(t, window_s)
        width = valid.sum(axis=1)
        blocks.append(np.stack(
            [np.where(valid, aug.mask[:, j][idx], 0).sum(axis=1) / width
             for j in range(dataset.n_beacons)], axis=1))
        return np.hstack(blocks)
    if rows.size < 2:
        kin = [np.zeros(rows.size)] * 3
    else:
        kin = [_fill(k) for k in gps_kinematics(dataset.lat[rows], dataset.lon[rows], t)]
    return np.hstack([rolling_features(t, k, window_s) for k in kin])


def build_feature_table(dataset: Dataset, sensor: str, params: EwmaParams = EwmaParams(),
                        window_s: float = WINDOW_S) -> FeatureTable:
    """One feature row per dataset row, users in ascending id, rows in file order.

    The dataset should already be cleaned (per-user strictly increasing
    timestamps).
    """
    params.validate()
    columns = feature_columns(sensor, dataset.n_beacons)
    blocks, rows_all = [], []
    for u in list_unique_users(dataset):
        rows = dataset.user_index[u]
        blocks.append(_user_block(dataset, rows, sensor, params, window_s))
        rows_all.append(rows)
    rows = np.concatenate(rows_all) if rows_all else np.zeros(0, dtype=np.int64)
    X = np.vstack(blocks) if blocks else np.zeros((0, len(columns)))
    return FeatureTable(
        sensor=sensor,
        columns=columns,
        X=X,
        user_id=dataset.user_id[rows],
        timestamp=dataset.timestamp[rows],
        label=dataset.bibo_label[rows],
        segment_id=dataset.trip_segment_id[rows],
        os_activity=dataset.os_activity[rows],
        row=rows,
    )
