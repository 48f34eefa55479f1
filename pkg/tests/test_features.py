import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from bibolab.features import (build_feature_table, feature_columns, gps_kinematics, haversine,
                              initial_bearing, rolling_features, window_features)


def naive_features(v, t, t_end, window=10.0):
    """Straight-line reference for the 14 window statistics."""
    n = len(v)
    mean = sum(v) / n
    std = math.sqrt(sum((x - mean) ** 2 for x in v) / n)
    mx, mn = max(v), min(v)
    peaks = [i for i in range(1, n - 1) if v[i] > v[i - 1] and v[i] > v[i + 1]]
    pt = [t[i] for i in peaks]
    tm = sum(t) / n
    sxx = sum((ti - tm) ** 2 for ti in t)
    slope = sum((ti - tm) * (x - mean) for ti, x in zip(t, v)) / sxx if sxx > 0 else 0.0
    return [
        mean, mx, mn, v.index(mn), v.index(mx), mx - mn,
        sum(abs(x - mean) > std for x in v),
        sum(x < mean - std for x in v),
        sum(x > mean + std for x in v),
        len(peaks),
        sum(ti > t_end - window / 2 for ti in pt),
        sum(v[i] > mean + std for i in peaks),
        (pt[-1] - pt[0]) / (len(pt) - 1) if len(pt) >= 2 else 0.0,
        slope,
    ]


def test_linear_window():
    f = window_features([1, 2, 3])
    assert f[:6].tolist() == [2, 3, 1, 0, 2, 2]
    assert f[13] == pytest.approx(1.0)


def test_constant_window():
    f = window_features([-60.0] * 10)
    assert f[6:13].tolist() == [0] * 7 and f[13] == 0


def test_alternating_peaks():
    assert window_features([0, 1, 0, 1, 0])[9] == 2


def test_single_point_window():
    f = window_features([5.0])
    assert f[6:14].tolist() == [0] * 8


def test_empty_window_rejected():
    with pytest.raises(ValueError):
        window_features([])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=12))
def test_oracle_equivalence(vals):
    v = [float(x) for x in vals]
    t = [float(i) for i in range(len(v))]
    got = window_features(v)
    ref = naive_features(v, t, t[-1])
    assert got == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_oracle_equivalence_random_windows():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        n = int(rng.integers(1, 11))
        v = list(np.round(rng.normal(-70, 8, n), 1))
        t = list(np.sort(rng.choice(np.arange(0.0, 10.0, 0.5), n, replace=False)))
        got = window_features(v, t)
        assert got == pytest.approx(naive_features(v, t, t[-1]), rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-90, -55), min_size=2, max_size=10), st.floats(-20, 20))
def test_translation_equivariance(v, c):
    # counts are discontinuous at ties (a point one std from the mean, near-equal values)
    x = np.array(v)
    gap = np.abs(np.abs(x - x.mean()) - x.std())
    d = np.abs(x[:, None] - x[None, :])
    assume(np.all(gap > 1e-6) and np.all((d == 0) | (d > 1e-6)))
    a, b = window_features(v), window_features(x + c)
    assert b[:3] == pytest.approx(a[:3] + c, abs=1e-9)
    assert b[3:5].tolist() == a[3:5].tolist()
    assert b[5:] == pytest.approx(a[5:], abs=1e-7)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=2, max_size=10, unique=True))
def test_time_reversal(v):
    a, b = window_features(v), window_features(v[::-1])
    n = len(v)
    assert b[3] == n - 1 - a[3] and b[4] == n - 1 - a[4]
    assert b[0] == pytest.approx(a[0]) and b[5] == a[5]


def test_rolling_partial_prefix_windows():
    t = np.arange(30.0)
    v = np.sin(t)
    F = rolling_features(t, v)
    for i in (0, 4, 8, 9, 20):
        lo = max(0, i - 9)
        assert F[i] == pytest.approx(window_features(v[lo:i + 1], t[lo:i + 1]), abs=1e-12)


def test_haversine_oracle():
    # independent spherical law of cosines
    lat1, lon1, lat2, lon2 = map(math.radians, (0.0, 0.0, 0.0, 1.0))
    d = 6_371_000 * math.acos(math.sin(lat1) * math.sin(lat2)
                              + math.cos(lat1) * math.cos(lat2) * math.cos(lon2 - lon1))
    assert haversine(0.0, 0.0, 0.0, 1.0) == pytest.approx(d, rel=1e-9)
    assert haversine(0.0, 0.0, 0.0, 1.0) == pytest.approx(111_194.93, abs=0.01)


def test_bearing_due_east():
    assert initial_bearing(0.0, 0.0, 0.0, 1.0) == pytest.approx(90.0)
    assert 0 <= initial_bearing(1.0, 0.0, 0.0, -1.0) < 360


def test_kinematics_identical_fixes():
    d, b, s = gps_kinematics([55.7, 55.7], [12.5, 12.5], [0.0, 1.0])
    assert d[1] == 0 and s[1] == 0
    assert math.isnan(d[0])


def test_kinematics_zero_dt_dropped():
    d, b, s = gps_kinematics([0.0, 0.0, 0.0], [0.0, 1.0, 2.0], [0.0, 1.0, 1.0])
    assert math.isnan(s[2]) and s[1] == pytest.approx(haversine(0, 0, 0, 1.0))


def test_column_counts():
    assert len(feature_columns("BLE", 5)) == 75
    assert len(feature_columns("GPS")) == 42
    assert feature_columns("BLE")[:2] == ["f1_rssi_0", "f2_rssi_0"]


def test_feature_tables(small_clean):
    clean = small_clean[0]
    for sensor, width in (("BLE", 75), ("GPS", 42)):
        ft = build_feature_table(clean, sensor)
        assert ft.X.shape == (len(clean), width)
        assert np.isfinite(ft.X).all()
        assert np.array_equal(ft.label, clean.bibo_label[ft.row])
    ble = build_feature_table(clean, "BLE")
    masks = ble.X[:, 70:]
    assert masks.min() >= 0 and masks.max() <= 1
