"""RSSI gap filling.

Short gaps are filled with an exponentially weighted moving average of the
nearby readings (weight ``exp(-decay * |dt|)``, so readings close to the gap
count most). Whatever cannot be filled is set to an out-of-domain constant
and a binary presence mask is appended, doubling the fingerprint length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RSSI_DOMAIN = (-100.0, -50.0)


class ImputationConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EwmaParams:
    window_s: float = 10.0
    decay: float = 0.5  # per second
    max_gap_s: float = 10.0
    fill_value: float = -120.0

    def validate(self):
        if self.window_s <= 0:
            raise ImputationConfigError("EWMA window must be > 0")
        if not 0.0 < self.decay <= 1.0:
            raise ImputationConfigError("decay rate must lie in (0, 1]")
        if self.max_gap_s < 0:
            raise ImputationConfigError("max gap span must be >= 0")
        lo, hi = RSSI_DOMAIN
        if not np.isfinite(self.fill_value) or lo < self.fill_value < hi:
            raise ImputationConfigError(
                f"fill constant {self.fill_value} collides with the RSSI domain ({lo}, {hi})"
            )


def ewma_impute(times, values, params: EwmaParams = EwmaParams(), mode: str = "batch"):
    """Fill NaN gaps of one RSSI series.

    A missing sample at ``t`` is filled when some reading lies inside its
    window (``|dt| <= window/2`` in batch mode, ``t - window <= t_j < t`` in
    streaming mode) and the nearest such reading is at most ``max_gap_s``
    away. Observed values are returned unchanged.

    Returns
    -------
    filled : ndarray
        Series with fillable gaps replaced, NaN elsewhere.
    imputed : ndarray of bool
        True where a value was produced by the average.
    """
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if t.shape != v.shape:
        raise ValueError("times and values must have the same shape")
    if mode not in ("batch", "stream"):
        raise ValueError(f"unknown mode {mode!r}")
    filled = v.copy()
    imputed = np.zeros(v.shape, dtype=bool)
    obs = ~np.isnan(v)
    gaps = np.flatnonzero(~obs)
    if gaps.size == 0 or not obs.any():
        return filled, imputed
    to, vo = t[obs], v[obs]
    half = params.window_s / 2.0
    for g in gaps:
        tg = t[g]
        if mode == "batch":
            lo = np.searchsorted(to, tg - half, side="left")
            hi = np.searchsorted(to, tg + half, side="right")
        else:
            lo = np.searchsorted(to, tg - params.window_s, side="left")
            hi = np.searchsorted(to, tg, side="left")
        if hi <= lo:
            continue
        dt = np.abs(to[lo:hi] - tg)
        if dt.min() > params.max_gap_s:
            continue
        w = np.exp(-params.decay * dt)
        filled[g] = np.dot(w, vo[lo:hi]) / w.sum()
        imputed[g] = True
    return filled, imputed


@dataclass(frozen=True)
class AugmentedFingerprint:
    """RSSI values with unfilled gaps set to the constant, plus presence mask.

    ``values`` and ``mask`` share a shape: ``(n_beacons,)`` for one
    timestamp or ``(n_timestamps, n_beacons)`` for a series.
    """

    values: np.ndarray
    mask: np.ndarray

    def flatten(self) -> np.ndarray:
        """Concatenate values and mask along the last axis (length ``2 * n_beacons``)."""
        return np.concatenate([self.values, self.mask.astype(np.float64)], axis=-1)


def imputation_trick(fp, params: EwmaParams = EwmaParams()) -> AugmentedFingerprint:
    """Replace the remaining gaps (NaN) of ``fp`` with ``params.fill_value``.

    ``fp`` should already carry any EWMA-filled values; every finite slot is
    kept with mask 1, every NaN slot becomes the constant with mask 0.
    """
    params.validate()
    fp = np.asarray(fp, dtype=np.float64)
    present = ~np.isnan(fp)
    values = np.where(present, fp, params.fill_value)
    return AugmentedFingerprint(values=values, mask=present.astype(np.int8))


def impute_series(times, rssi, params: EwmaParams = EwmaParams(), mode: str = "batch"):
    """EWMA per beacon column, then the imputation trick, for one user's series.

    Returns the augmented fingerprints and a boolean matrix marking the
    EWMA-imputed slots.
    """
    rssi = np.asarray(rssi, dtype=np.float64)
    filled = np.empty_like(rssi)
    imputed = np.zeros(rssi.shape, dtype=bool)
    for j in range(rssi.shape[1]):
        filled[:, j], imputed[:, j] = ewma_impute(times, rssi[:, j], params, mode)
    return imputation_trick(filled, params), imputed
