"""Synthetic bus network with BLE beacons and GPS-tracked passengers.

Buses shuttle back and forth along their route, dwelling at every stop.
Passengers wait at stops, board a dwelling bus, ride to another stop on the
route, alight, and either wait again or walk to a different stop. Each
passenger's phone samples GPS and the RSSI of every beacon once per sampling
period; the BI/BO label is exact because it is the simulator's own state.

Coordinates live on a 2-D plane in metres and are projected to lat/lon with
a fixed equirectangular mapping around ``NetworkConfig.origin``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

BI = 1
BO = 0
AUTOMOTIVE = 1
OTHER = 0

EARTH_RADIUS_M = 6_371_000.0

# sampling-instant user states
_WAITING, _RIDING, _WALKING = 0, 1, 2


class ConfigError(ValueError):
    """Scenario configuration violates an invariant."""


@dataclass(frozen=True)
class Stop:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class Bus:
    id: int
    route: int
    max_speed: float = 4.17


@dataclass(frozen=True)
class Beacon:
    id: int
    mount: str  # "bus:<id>" or "stop:<id>"
    tx_rate_hz: float = 1.667
    tx_power_dbm: float = -8.0

    @property
    def mount_kind(self) -> str:
        return self.mount.split(":", 1)[0]

    @property
    def mount_id(self) -> int:
        return int(self.mount.split(":", 1)[1])


@dataclass(frozen=True)
class NetworkConfig:
    routes: tuple
    stops: tuple
    buses: tuple
    beacons: tuple
    duration_s: float = 1144.0
    sampling_hz: float = 1.0
    dwell_s: float = 20.0
    footprint_m: float = 2.5
    walk_speed: float = 1.4
    walk_prob: float = 0.3
    mean_linger_s: float = 40.0
    wait_offset_m: tuple = (3.0, 12.0)
    gps_noise_m: float = 3.0
    beacon_height_m: float = 1.0
    os_accuracy: float = 0.52
    min_boardings: int = 2
    origin: tuple = (55.7, 12.5)

    def validate(self):
        if len(self.routes) < 1:
            raise ConfigError("need at least 1 route")
        if len(self.stops) < 2:
            raise ConfigError("need at least 2 stops")
        if len(self.buses) < 1:
            raise ConfigError("need at least 1 bus")
        if len(self.beacons) < 1:
            raise ConfigError("need at least 1 beacon")
        stop_ids = {s.id for s in self.stops}
        bus_ids = {b.id for b in self.buses}
        if len(stop_ids) != len(self.stops):
            raise ConfigError("duplicate stop id")
        if len(bus_ids) != len(self.buses):
            raise ConfigError("duplicate bus id")
        for i, route in enumerate(self.routes):
            if len(route) < 2:
                raise ConfigError(f"route {i} must visit at least 2 stops")
            for sid in route:
                if sid not in stop_ids:
                    raise ConfigError(f"route {i} references unknown stop {sid}")
        for b in self.buses:
            if not 0 <= b.route < len(self.routes):
                raise ConfigError(f"bus {b.id} assigned to unknown route {b.route}")
            if b.max_speed <= 0:
                raise ConfigError(f"bus {b.id} max speed must be > 0")
        for bc in self.beacons:
            kind, _, ident = bc.mount.partition(":")
            if kind not in ("bus", "stop") or not ident.lstrip("-").isdigit():
                raise ConfigError(f"beacon {bc.id} mount {bc.mount!r} must be 'bus:<id>' or 'stop:<id>'")
            pool = bus_ids if kind == "bus" else stop_ids
            if int(ident) not in pool:
                raise ConfigError(f"beacon {bc.id} mount references unknown {kind} {ident}")
            if bc.tx_rate_hz <= 0:
                raise ConfigError(f"beacon {bc.id} tx rate must be > 0")
        if self.sampling_hz <= 0:
            raise ConfigError("sampling rate must be > 0")
        if self.duration_s <= 0:
            raise ConfigError("duration must be > 0")
        if not 0.0 <= self.os_accuracy <= 1.0:
            raise ConfigError("os_accuracy must lie in [0, 1]")

    @property
    def n_samples(self) -> int:
        return int(math.floor(self.duration_s * self.sampling_hz + 1e-9))


@dataclass(frozen=True)
class RssiModel:
    ref_rssi_dbm: float = -55.0  # at 1 m, for a beacon at ref_tx_power_dbm
    ref_tx_power_dbm: float = -8.0
    path_loss_exponent: float = 2.3
    shadowing_std_db: float = 4.0
    dropout_prob: float = 0.25
    body_shadow_db: float = 8.0
    body_shadow_prob: float = 0.3
    clamp: tuple = (-100.0, -50.0)

    def validate(self):
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ConfigError("dropout probability must lie in [0, 1]")
        if not 0.0 <= self.body_shadow_prob <= 1.0:
            raise ConfigError("body-shadow probability must lie in [0, 1]")
        if self.shadowing_std_db < 0:
            raise ConfigError("shadowing std must be >= 0")
        lo, hi = self.clamp
        if not lo < hi:
            raise ConfigError("clamp range must satisfy low < high")


@dataclass
class TrajectoryPoint:
    user_id: int
    timestamp: float
    lat: float
    lon: float
    rssi: tuple  # one entry per beacon, None when absent
    os_activity: int
    bibo_label: int
    trip_segment_id: int
    # simulator-only ground truth, not persisted
    x: float = field(default=math.nan, repr=False)
    y: float = field(default=math.nan, repr=False)
    bus_id: int = field(default=-1, repr=False)


def default_network() -> NetworkConfig:
    """Two buses on two routes sharing the middle stop, one beacon per bus and stop."""
    stops = (Stop(0, 0.0, 0.0), Stop(1, 220.0, 0.0), Stop(2, 220.0, 180.0))
    routes = ((0, 1), (1, 2))
    buses = (Bus(0, route=0), Bus(1, route=1))
    beacons = (
        Beacon(0, "bus:0"),
        Beacon(1, "bus:1"),
        Beacon(2, "stop:0"),
        Beacon(3, "stop:1"),
        Beacon(4, "stop:2"),
    )
    return NetworkConfig(routes=routes, stops=stops, buses=buses, beacons=beacons)


# ---------------------------------------------------------------------------
# config files


def network_from_dict(d: dict) -> NetworkConfig:
    d = dict(d)
    d["stops"] = tuple(Stop(**s) for s in d["stops"])
    d["buses"] = tuple(Bus(**b) for b in d["buses"])
    d["beacons"] = tuple(Beacon(**b) for b in d["beacons"])
    d["routes"] = tuple(tuple(r) for r in d["routes"])
    for key in ("wait_offset_m", "origin"):
        if key in d:
            d[key] = tuple(d[key])
    try:
        cfg = NetworkConfig(**d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate()
    return cfg


def rssi_model_from_dict(d: dict) -> RssiModel:
    d = dict(d)
    if "clamp" in d:
        d["clamp"] = tuple(d["clamp"])
    try:
        model = RssiModel(**d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    model.validate()
    return model


def network_to_dict(cfg: NetworkConfig) -> dict:
    return asdict(cfg)


def load_scenario_config(path) -> tuple[NetworkConfig, RssiModel, int, int]:
    """Read a JSON scenario file: ``{"network": {...}, "rssi": {...}, "n_users": 12, "seed": 2022}``.

    Missing sections fall back to the defaults.
    """
    raw = json.loads(Path(path).read_text())
    section = raw.get("scenario", raw)
    net = network_from_dict(section["network"]) if "network" in section else default_network()
    rssi = rssi_model_from_dict(section.get("rssi", {}))
    return net, rssi, int(section.get("n_users", 12)), int(section.get("seed", 2022))


# ---------------------------------------------------------------------------
# radio and activity models


def _rssi_samples(distance, model: RssiModel, rng, extra_loss_db=0.0):
    """Vectorised path-loss draw; NaN marks an absent reading."""
    d = np.asarray(distance, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("distance must be > 0")
    mean = model.ref_rssi_dbm - 10.0 * model.path_loss_exponent * np.log10(d) - extra_loss_db
    if model.shadowing_std_db > 0:
        value = mean + rng.normal(0.0, model.shadowing_std_db, size=d.shape)
    else:
        value = mean
    dropped = rng.random(size=d.shape) < model.dropout_prob
    lo, hi = model.clamp
    value = np.where(value >= hi, np.nextafter(hi, -np.inf), value)
    return np.where(dropped | (value <= lo), np.nan, value)


def rssi_at(distance: float, rssi_model: RssiModel, rng, shadowed: bool = False) -> float | None:
    """One RSSI reading at ``distance`` metres, or None if nothing was received.

    Log-distance path loss around the 1 m reference, Gaussian shadowing and
    Bernoulli dropout. Readings at or below the clamp floor are absent;
    readings at or above the ceiling are pinned just inside it.
    """
    if distance <= 0:
        raise ValueError("distance must be > 0")
    extra = rssi_model.body_shadow_db if shadowed else 0.0
    v = float(_rssi_samples(distance, rssi_model, rng, extra))
    return None if math.isnan(v) else v


def emulate_os_activity(true_label: int, accuracy: float, rng) -> int:
    """Automotive/other class that agrees with the BIBO label with probability ``accuracy``."""
    consistent = AUTOMOTIVE if true_label == BI else OTHER
    if rng.random() < accuracy:
        return consistent
    return 1 - consistent


def _emulate_os_activity_array(labels, accuracy, rng):
    consistent = np.where(labels == BI, AUTOMOTIVE, OTHER)
    keep = rng.random(labels.shape[0]) < accuracy
    return np.where(keep, consistent, 1 - consistent).astype(np.int64)


def plane_to_latlon(x, y, origin):
    lat0, lon0 = origin
    lat = lat0 + np.degrees(np.asarray(y) / EARTH_RADIUS_M)
    lon = lon0 + np.degrees(np.asarray(x) / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return lat, lon


# ---------------------------------------------------------------------------
# bus timetable


@dataclass
class _BusTrack:
    x: np.ndarray
    y: np.ndarray
    dwell_stop: np.ndarray  # stop id while dwelling, -1 while moving


def _bus_track(cfg: NetworkConfig, bus: Bus, times, phase):
    stops = {s.id: s for s in cfg.stops}
    route = list(cfg.routes[bus.route])
    loop = route + route[-2:0:-1]  # ping-pong visiting order
    legs = []  # (start_time, dwell_end, travel_end, from, to)
    t = 0.0
    for i, sid in enumerate(loop):
        nxt = loop[(i + 1) % len(loop)]
        a, b = stops[sid], stops[nxt]
        travel = math.hypot(b.x - a.x, b.y - a.y) / bus.max_speed
        legs.append((t, t + cfg.dwell_s, t + cfg.dwell_s + travel, sid, nxt))
        t += cfg.dwell_s + travel
    cycle = t
    starts = np.array([leg[0] for leg in legs])
    tau = np.mod(times + phase * cycle, cycle)
    idx = np.searchsorted(starts, tau, side="right") - 1
    x = np.empty_like(times)
    y = np.empty_like(times)
    dwell = np.full(times.shape, -1, dtype=np.int64)
    for k, (t0, t_dwell, t_end, sa, sb) in enumerate(legs):
        m = idx == k
        if not np.any(m):
            continue
        a, b = stops[sa], stops[sb]
        frac = np.clip((tau[m] - t_dwell) / max(t_end - t_dwell, 1e-12), 0.0, 1.0)
        x[m] = a.x + frac * (b.x - a.x)
        y[m] = a.y + frac * (b.y - a.y)
        dwell[m] = np.where(tau[m] < t_dwell, sa, -1)
    return _BusTrack(x, y, dwell)


# ---------------------------------------------------------------------------
# passengers


def _simulate_user(cfg, tracks, times, rng):
    """Walk one passenger through the network; returns per-sample arrays."""
    n = times.size
    dt = 1.0 / cfg.sampling_hz
    stops = {s.id: s for s in cfg.stops}
    stop_ids = sorted(stops)
    serving = {sid: [b for b in cfg.buses if sid in cfg.routes[b.route]] for sid in stop_ids}

    x = np.empty(n)
    y = np.empty(n)
    label = np.zeros(n, dtype=np.int64)
    bus_of = np.full(n, -1, dtype=np.int64)

    def wait_offset():
        r = rng.uniform(*cfg.wait_offset_m)
        a = rng.uniform(0, 2 * math.pi)
        return r * math.cos(a), r * math.sin(a)

    state = _WAITING
    stop = int(rng.choice(stop_ids))
    offset = wait_offset()
    ready_at = rng.exponential(cfg.mean_linger_s)
    bus = None
    dest = None
    walk = None  # (x0, y0, x1, y1, t0, t1, target stop)
    boardings = 0

    for k in range(n):
        t = times[k]
        if state == _WAITING and t >= ready_at:
            here = [b for b in serving[stop] if tracks[b.id].dwell_stop[k] == stop]
            if here:
                bus = here[int(rng.integers(len(here)))]
                dest = int(rng.choice([s for s in cfg.routes[bus.route] if s != stop]))
                r = cfg.footprint_m * math.sqrt(rng.random())
                a = rng.uniform(0, 2 * math.pi)
                offset = (r * math.cos(a), r * math.sin(a))
                state = _RIDING
                boardings += 1
        elif state == _RIDING and tracks[bus.id].dwell_stop[k] == dest:
            stop = dest
            bus = None
            if rng.random() < cfg.walk_prob:
                target = int(rng.choice([s for s in stop_ids if s != stop]))
                a, b = stops[stop], stops[target]
                dur = math.hypot(b.x - a.x, b.y - a.y) / cfg.walk_speed
                walk = (a.x, a.y, b.x, b.y, t, t + dur, target)
                state = _WALKING
            else:
                offset = wait_offset()
                ready_at = t + rng.exponential(cfg.mean_linger_s)
                state = _WAITING
        elif state == _WALKING and t >= walk[5]:
            stop = walk[6]
            offset = wait_offset()
            ready_at = t + rng.exponential(cfg.mean_linger_s)
            state = _WAITING

        if state == _RIDING:
            tr = tracks[bus.id]
            x[k] = tr.x[k] + offset[0]
            y[k] = tr.y[k] + offset[1]
            label[k] = BI
            bus_of[k] = bus.id
        elif state == _WALKING:
            x0, y0, x1, y1, t0, t1, _ = walk
            frac = min(max((t - t0) / max(t1 - t0, dt), 0.0), 1.0)
            x[k] = x0 + frac * (x1 - x0)
            y[k] = y0 + frac * (y1 - y0)
        else:
            s = stops[stop]
            x[k] = s.x + offset[0]
            y[k] = s.y + offset[1]
    return x, y, label, bus_of, boardings


def _beacon_positions(cfg, tracks, k_slice=slice(None)):
    stops = {s.id: s for s in cfg.stops}
    out = []
    for bc in cfg.beacons:
        if bc.mount_kind == "bus":
            tr = tracks[bc.mount_id]
            out.append((tr.x[k_slice], tr.y[k_slice]))
        else:
            s = stops[bc.mount_id]
            out.append((s.x, s.y))
    return out


def _user_rssi(cfg, rssi_model, tracks, times, x, y, shadowed, beacon_phase, rng):
    """RSSI matrix (n_samples, n_beacons): mean of the adverts heard in each period."""
    n = times.size
    dt = 1.0 / cfg.sampling_hz
    extra = rssi_model.body_shadow_db if shadowed else 0.0
    rssi = np.full((n, len(cfg.beacons)), np.nan)
    for j, (bc, (bx, by)) in enumerate(zip(cfg.beacons, _beacon_positions(cfg, tracks))):
        d = np.sqrt((x - bx) ** 2 + (y - by) ** 2 + cfg.beacon_height_m ** 2)
        period = 1.0 / bc.tx_rate_hz
        # adverts emitted in (t - dt, t]
        hi = np.floor((times - beacon_phase[j] * period) / period)
        lo = np.floor((times - dt - beacon_phase[j] * period) / period)
        n_adv = (hi - lo).astype(np.int64)
        k_max = int(n_adv.max()) if n else 0
        total = np.zeros(n)
        count = np.zeros(n)
        for a in range(k_max):
            v = _rssi_samples(d, rssi_model, rng, extra)
            ok = (a < n_adv) & ~np.isnan(v)
            total[ok] += v[ok]
            count[ok] += 1
        with np.errstate(invalid="ignore", divide="ignore"):
            rssi[:, j] = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return rssi


def segment_ids(labels) -> np.ndarray:
    """Trip-segment id per row: starts at 0 and increments at each label change."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(([0], np.cumsum(labels[1:] != labels[:-1]))).astype(np.int64)


def simulate_scenario(config: NetworkConfig, rssi_model: RssiModel, n_users: int, seed: int,
                      max_attempts: int = 50) -> dict[int, list[TrajectoryPoint]]:
    """Simulate ``n_users`` passengers; returns ``{user_id: [TrajectoryPoint, ...]}``.

    Every user is observed over the full duration and boards at least
    ``config.min_boardings`` times; a user whose draw falls short is redrawn
    from the next derived stream. Output depends only on ``(config, seed)``.
    """
    config.validate()
    rssi_model.validate()
    if n_users < 1:
        raise ConfigError("n_users must be >= 1")

    times = np.arange(config.n_samples) / config.sampling_hz
    root = np.random.SeedSequence(seed)
    net_rng = np.random.default_rng(root.spawn(1)[0])
    tracks = {b.id: _bus_track(config, b, times, net_rng.random()) for b in config.buses}
    beacon_phase = net_rng.random(len(config.beacons))

    out = {}
    for u in range(n_users):
        for attempt in range(max_attempts):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, u, attempt)))
            x, y, label, bus_of, boardings = _simulate_user(config, tracks, times, rng)
            if boardings >= config.min_boardings:
                break
        else:
            raise ConfigError(
                f"user {u} could not board {config.min_boardings} times in "
                f"{max_attempts} attempts; lengthen duration_s"
            )
        shadowed = rng.random() < rssi_model.body_shadow_prob
        rssi = _user_rssi(config, rssi_model, tracks, times, x, y, shadowed, beacon_phase, rng)
        gx = x + rng.normal(0, config.gps_noise_m, x.shape) if config.gps_noise_m > 0 else x
        gy = y + rng.normal(0, config.gps_noise_m, y.shape) if config.gps_noise_m > 0 else y
        lat, lon = plane_to_latlon(gx, gy, config.origin)
        act = _emulate_os_activity_array(label, config.os_accuracy, rng)
        seg = segment_ids(label)
        out[u] = [
            TrajectoryPoint(
                user_id=u,
                timestamp=float(times[k]),
                lat=float(lat[k]),
                lon=float(lon[k]),
                rssi=tuple(None if math.isnan(v) else float(v) for v in rssi[k]),
                os_activity=int(act[k]),
                bibo_label=int(label[k]),
                trip_segment_id=int(seg[k]),
                x=float(x[k]),
                y=float(y[k]),
                bus_id=int(bus_of[k]),
            )
            for k in range(times.size)
        ]
    return out


def bus_positions(config: NetworkConfig, seed: int):
    """Per-bus (x, y, dwell_stop) tracks on the sampling grid used by ``simulate_scenario``."""
    times = np.arange(config.n_samples) / config.sampling_hz
    net_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    return {b.id: _bus_track(config, b, times, net_rng.random()) for b in config.buses}
