"""Canonical trajectory table: CSV persistence, cleaning and trip segmentation."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1"
LABELS = {"BI": 1, "BO": 0}
LABEL_NAMES = {1: "BI", 0: "BO"}
N_BEACONS = 5


class SchemaError(ValueError):
    pass


def csv_columns(n_beacons: int = N_BEACONS) -> list[str]:
    return (
        ["user_id", "timestamp_s", "lat", "lon"]
        + [f"rssi_{i}" for i in range(n_beacons)]
        + ["os_activity", "bibo_label", "trip_segment_id"]
    )


@dataclass(eq=False)
class Dataset:
    """Column-oriented trajectory rows; absent RSSI readings are NaN."""

    user_id: np.ndarray
    timestamp: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    rssi: np.ndarray  # (n_rows, n_beacons)
    os_activity: np.ndarray
    bibo_label: np.ndarray
    trip_segment_id: np.ndarray
    schema_version: str = SCHEMA_VERSION
    _index: dict = field(default=None, repr=False)

    def __post_init__(self):
        self.user_id = np.asarray(self.user_id, dtype=np.int64)
        self.timestamp = np.asarray(self.timestamp, dtype=np.float64)
        self.lat = np.asarray(self.lat, dtype=np.float64)
        self.lon = np.asarray(self.lon, dtype=np.float64)
        self.rssi = np.asarray(self.rssi, dtype=np.float64)
        if self.rssi.ndim != 2:
            self.rssi = self.rssi.reshape(self.user_id.size, -1)
        if self.rssi.shape[0] != self.user_id.size:
            raise SchemaError("column rssi has wrong length")
        self.os_activity = np.asarray(self.os_activity, dtype=np.int64)
        self.bibo_label = np.asarray(self.bibo_label, dtype=np.int64)
        self.trip_segment_id = np.asarray(self.trip_segment_id, dtype=np.int64)
        n = self.user_id.size
        for name in ("timestamp", "lat", "lon", "os_activity", "bibo_label", "trip_segment_id"):
            if getattr(self, name).shape != (n,):
                raise SchemaError(f"column {name} has wrong length")
        keys = np.rec.fromarrays([self.user_id, self.timestamp])
        if np.unique(keys).size != n:
            raise SchemaError("duplicate (user_id, timestamp) key")

    def __len__(self):
        return self.user_id.size

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.schema_version == other.schema_version and all(
            np.array_equal(getattr(self, c), getattr(other, c), equal_nan=True)
            for c in ("user_id", "timestamp", "lat", "lon", "rssi", "os_activity",
                      "bibo_label", "trip_segment_id")
        )

    @property
    def n_beacons(self) -> int:
        return self.rssi.shape[1]

    @property
    def user_index(self) -> dict[int, np.ndarray]:
        """Row positions of each user, in file order."""
        if self._index is None:
            order = np.argsort(self.user_id, kind="stable")
            users, starts = np.unique(self.user_id[order], return_index=True)
            self._index = {int(u): rows for u, rows in zip(users, np.split(order, starts[1:]))}
        return self._index

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            self.user_id[rows], self.timestamp[rows], self.lat[rows], self.lon[rows],
            self.rssi[rows], self.os_activity[rows], self.bibo_label[rows],
            self.trip_segment_id[rows], self.schema_version,
        )

    @classmethod
    def from_points(cls, points) -> "Dataset":
        """Build from ``{user: [TrajectoryPoint]}`` or a flat iterable of points."""
        if isinstance(points, dict):
            points = [p for u in sorted(points) for p in points[u]]
        points = list(points)
        nb = len(points[0].rssi) if points else N_BEACONS
        return cls(
            [p.user_id for p in points],
            [p.timestamp for p in points],
            [p.lat for p in points],
            [p.lon for p in points],
            np.array([[math.nan if v is None else v for v in p.rssi] for p in points],
                     dtype=np.float64).reshape(len(points), nb),
            [p.os_activity for p in points],
            [p.bibo_label for p in points],
            [p.trip_segment_id for p in points],
        )


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def save_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_columns(dataset.n_beacons))
        for i in range(len(dataset)):
            w.writerow(
                [int(dataset.user_id[i]), _fmt(dataset.timestamp[i]), _fmt(dataset.lat[i]),
                 _fmt(dataset.lon[i])]
                + [_fmt(v) for v in dataset.rssi[i]]
                + [int(dataset.os_activity[i]), LABEL_NAMES[int(dataset.bibo_label[i])],
                   int(dataset.trip_segment_id[i])]
            )


def _parse_header(header):
    header = [h.strip() for h in header]
    n_rssi = sum(1 for h in header if h.startswith("rssi_"))
    expected = csv_columns(n_rssi)
    for pos, name in enumerate(header):
        if name not in expected:
            raise SchemaError(f"unknown column {name!r}")
        if pos >= len(expected) or expected[pos] != name:
            raise SchemaError(f"column {pos} is {name!r}, expected {expected[min(pos, len(expected) - 1)]!r}")
    if len(header) != len(expected):
        raise SchemaError(f"missing column {expected[len(header)]!r}")
    if n_rssi < 1:
        raise SchemaError("no rssi_* columns")
    return header, n_rssi


def load_csv(path) -> Dataset:
    """Read a dataset CSV; empty RSSI fields load as absent (NaN), never 0."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: missing header") from None
        header, nb = _parse_header(header)
        cols = {name: [] for name in header}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            for name, raw in zip(header, row):
                raw = raw.strip()
                try:
                    if name == "bibo_label":
                        val = LABELS[raw]
                    elif name in ("user_id", "os_activity", "trip_segment_id"):
                        val = int(raw)
                        if name == "os_activity" and val not in (0, 1):
                            raise ValueError(raw)
                    elif name.startswith("rssi_"):
                        val = math.nan if raw == "" else float(raw)
                    else:
                        val = float(raw)
                        if math.isnan(val):
                            raise ValueError(raw)
                except (KeyError, ValueError):
                    raise SchemaError(f"line {lineno}, column {name}: bad value {raw!r}") from None
                cols[name].append(val)
    n = len(cols["user_id"])
    rssi = np.array([cols[f"rssi_{i}"] for i in range(nb)], dtype=np.float64).T.reshape(n, nb)
    try:
        return Dataset(
            cols["user_id"], cols["timestamp_s"], cols["lat"], cols["lon"], rssi,
            cols["os_activity"], cols["bibo_label"], cols["trip_segment_id"],
        )
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def list_unique_users(dataset: Dataset) -> list[int]:
    return sorted(int(u) for u in np.unique(dataset.user_id))


@dataclass(frozen=True)
class TripSegment:
    user_id: int
    segment_id: int
    label: int
    start_s: float
    end_s: float
    rows: np.ndarray  # dataset row positions covered by the segment

    @property
    def n_rows(self) -> int:
        return self.rows.size


@dataclass
class Segmentation:
    user_id: int
    segments: list
    retained_rows: np.ndarray
    n_dropped: int
    empty: bool = False

    def __iter__(self):
        return iter(self.segments)

    def __len__(self):
        return len(self.segments)


def clean_segment_trajectories(dataset: Dataset, user: int) -> Segmentation:
    """Drop rows whose timestamp does not exceed the last retained one, then
    split the remainder into maximal runs of equal BIBO label.
    """
    if user not in dataset.user_index:
        raise KeyError(f"unknown user {user}")
    rows = dataset.user_index[user]
    ts = dataset.timestamp[rows]
    # keep row i iff t_i > max(t_0..t_{i-1}) over rows kept so far; the running
    # maximum of all earlier rows equals that of kept rows
    prev_max = np.maximum.accumulate(np.r_[-np.inf, ts[:-1]]) if ts.size else ts
    keep = ts > prev_max
    kept = rows[keep]
    n_dropped = int(rows.size - kept.size)
    if kept.size == 0:
        warnings.warn(f"user {user} has no retained rows", stacklevel=2)
        return Segmentation(user, [], kept, n_dropped, empty=True)
    labels = dataset.bibo_label[kept]
    cuts = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    segments = []
    for sid, span in enumerate(np.split(kept, cuts)):
        segments.append(TripSegment(
            user_id=int(user),
            segment_id=sid,
            label=int(dataset.bibo_label[span[0]]),
            start_s=float(dataset.timestamp[span[0]]),
            end_s=float(dataset.timestamp[span[-1]]),
            rows=span,
        ))
    return Segmentation(user, segments, kept, n_dropped)


@dataclass
class CleanReport:
    n_rows_in: int
    n_rows_out: int
    dropped_per_user: dict
    empty_users: list


def clean_dataset(dataset: Dataset) -> tuple[Dataset, dict[int, list[TripSegment]], CleanReport]:
    """Clean and segment every user; returns the retained rows (grouped by
    user, time-ordered) with ``trip_segment_id`` rewritten from the labels.
    """
    keep_rows = []
    seg_ids = []
    dropped = {}
    empty = []
    for u in list_unique_users(dataset):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            s = clean_segment_trajectories(dataset, u)
        dropped[u] = s.n_dropped
        if s.empty:
            empty.append(u)
            continue
        for seg in s.segments:
            keep_rows.append(seg.rows)
            seg_ids.append(np.full(seg.n_rows, seg.segment_id, dtype=np.int64))
    rows = np.concatenate(keep_rows) if keep_rows else np.zeros(0, dtype=np.int64)
    clean = dataset.take(rows)
    clean.trip_segment_id = np.concatenate(seg_ids) if seg_ids else np.zeros(0, dtype=np.int64)
    segments = {}
    for u in list_unique_users(clean):
        segments[u] = clean_segment_trajectories(clean, u).segments
    report = CleanReport(len(dataset), len(clean), dropped, empty)
    return clean, segments, report
