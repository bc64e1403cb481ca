"""Deterministic synthetic sparse-GPS corpus with planted ground truth.

Trips cruise along a straight geodesic route and dwell at scheduled
stations (engine off, stay time recorded). Abnormal events are planted
per trip: extended-duration dwells and brief low-speed pauses. Two
real-world artifacts are simulated as well: stop-and-go traffic jams,
where the engine stays on (stay time reads zero) and the receiver
repeats a frozen fix between creeps, and signal dropouts that swallow
samples for minutes at a time. Sampling intervals, positions, speeds
and stay reports carry configurable noise; everything is reproducible
from one seed.
"""

from __future__ import annotations

import datetime
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .geo import GpsPoint, Trip, haversine_ll

METERS_PER_DEG_LAT = 111_194.92664455873   # pi * 6371 km / 180

KIND_DURATION = "duration"
KIND_LOW_SPEED = "low_speed"

CSV_HEADER = ["lng", "lat", "s", "v", "d_prev", "d", "date", "t"]


@dataclass(frozen=True)
class PlantedStop:
    position_km: float
    duration_s: float


@dataclass(frozen=True)
class PlantedAbnormal:
    position_km: float
    duration_s: float
    kind: str = KIND_DURATION


def _default_stations() -> list[PlantedStop]:
    positions = [4.0, 8.0, 12.0, 16.0, 20.0, 24.0, 28.0, 32.0, 36.0]
    durations = [65.0, 60.0, 70.0, 65.0, 60.0, 70.0, 65.0, 60.0, 70.0]
    return [PlantedStop(p, d) for p, d in zip(positions, durations)]


def _default_abnormal() -> list[PlantedAbnormal]:
    duration_events = [
        (2.3, 260.0), (6.1, 230.0), (10.2, 320.0), (14.3, 280.0),
        (18.5, 330.0), (22.7, 240.0), (26.2, 300.0), (30.6, 270.0),
    ]
    low_speed_events = [(34.1, 30.0), (37.8, 35.0)]
    return [PlantedAbnormal(p, d, KIND_DURATION) for p, d in duration_events] + [
        PlantedAbnormal(p, d, KIND_LOW_SPEED) for p, d in low_speed_events
    ]


@dataclass
class SynthConfig:
    route_length_km: float = 40.0
    n_trips: int = 20
    sampling_interval_range: tuple[float, float] = (30.0, 60.0)
    gps_noise_sigma_m: float = 10.0
    speed_noise_kmh: float = 2.0      # applied to moving samples only
    stay_noise_frac: float = 0.12     # per-sample jitter on reported stays
    cruise_speed_kmh: float = 72.0
    planted_normal_stops: list[PlantedStop] = field(default_factory=_default_stations)
    planted_abnormal: list[PlantedAbnormal] = field(default_factory=_default_abnormal)
    jams_per_trip: int = 2
    jam_duration_range: tuple[float, float] = (400.0, 550.0)
    jam_pause_range: tuple[float, float] = (45.0, 75.0)
    jam_creep_hop_m: float = 300.0
    gaps_per_trip: int = 1
    gap_duration_range: tuple[float, float] = (240.0, 420.0)
    route_origin: tuple[float, float] = (116.0, 39.5)   # (lng, lat)
    start_date: str = "2024-03-01"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.route_length_km <= 0 or self.n_trips < 1:
            raise ValueError("route length and trip count must be positive")
        lo, hi = self.sampling_interval_range
        if not 0 < lo <= hi:
            raise ValueError("bad sampling interval range")
        for stop in self.planted_normal_stops:
            if not 0 <= stop.position_km <= self.route_length_km or stop.duration_s <= 0:
                raise ValueError(f"bad planted stop {stop}")
        for ev in self.planted_abnormal:
            if not 0 <= ev.position_km <= self.route_length_km or ev.duration_s <= 0:
                raise ValueError(f"bad planted abnormal {ev}")
            if ev.kind not in (KIND_DURATION, KIND_LOW_SPEED):
                raise ValueError(f"unknown abnormal kind {ev.kind!r}")


@dataclass(frozen=True)
class AbnormalStopTruth:
    lng: float
    lat: float
    duration_s: float
    kind: str
    trip_id: str


@dataclass
class GroundTruth:
    stops: list[AbnormalStopTruth]
    abnormal_samples: set[tuple[str, int]]

    def is_abnormal(self, trip_id: str, point_index: int) -> bool:
        return (trip_id, point_index) in self.abnormal_samples

    def to_dict(self) -> dict:
        return {
            "abnormal": [asdict(s) for s in self.stops],
            "abnormal_samples": sorted([t, i] for t, i in self.abnormal_samples),
        }


def load_ground_truth(path: str) -> GroundTruth:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    stops = [AbnormalStopTruth(**rec) for rec in payload["abnormal"]]
    samples = {(t, int(i)) for t, i in payload["abnormal_samples"]}
    return GroundTruth(stops=stops, abnormal_samples=samples)


@dataclass(frozen=True)
class _Phase:
    t0: float
    t1: float
    x: float              # along-track meters at phase start
    v_kmh: float          # cruise speed; 0 when holding position
    engine_off: bool
    stay_s: float         # true dwell duration, 0 outside engine-off dwells
    frozen: bool          # receiver repeats one fix for the whole phase
    truth_index: int      # index into the abnormal event list, -1 otherwise


def _route_lnglat(origin: tuple[float, float], x_m: float) -> tuple[float, float]:
    lng0, lat0 = origin
    return lng0, lat0 + x_m / METERS_PER_DEG_LAT


def _build_timeline(
    cfg: SynthConfig, rng: np.random.Generator, trip_events: list[tuple[PlantedAbnormal, int]]
) -> list[_Phase]:
    """Phase list for one trip: cruises, dwells, and jam pauses."""
    cruise_mps = cfg.cruise_speed_kmh / 3.6
    route_m = cfg.route_length_km * 1000.0

    # (position_m, kind, duration, truth_index)
    events: list[tuple[float, str, float, int]] = [
        (s.position_km * 1000.0, "dwell", s.duration_s, -1)
        for s in cfg.planted_normal_stops
    ]
    for ev, truth_idx in trip_events:
        events.append((ev.position_km * 1000.0, "dwell", ev.duration_s, truth_idx))
    occupied = sorted(pos for pos, _, _, _ in events)
    for _ in range(cfg.jams_per_trip):
        for _attempt in range(100):
            pos = rng.uniform(0.07, 0.93) * route_m
            if all(abs(pos - p) > 1500.0 for p in occupied):
                break
        dur = rng.uniform(*cfg.jam_duration_range)
        events.append((pos, "jam", dur, -1))
        occupied.append(pos)
        occupied.sort()
    events.sort(key=lambda e: (e[0], e[1]))

    phases: list[_Phase] = []
    t = 0.0
    x = 0.0
    for pos, kind, dur, truth_idx in events:
        if pos > x:
            dt = (pos - x) / cruise_mps
            phases.append(_Phase(t, t + dt, x, cfg.cruise_speed_kmh, False, 0.0, False, -1))
            t += dt
            x = pos
        if kind == "dwell":
            phases.append(_Phase(t, t + dur, x, 0.0, True, dur, False, truth_idx))
            t += dur
        else:
            end = t + dur
            while t < end:
                pause = min(rng.uniform(*cfg.jam_pause_range), end - t)
                phases.append(_Phase(t, t + pause, x, 0.0, False, 0.0, True, -1))
                t += pause
                x += cfg.jam_creep_hop_m   # instantaneous creep between pauses
    if x < route_m:
        dt = (route_m - x) / cruise_mps
        phases.append(_Phase(t, t + dt, x, cfg.cruise_speed_kmh, False, 0.0, False, -1))
        t += dt
    return phases


def generate(cfg: SynthConfig) -> tuple[list[Trip], GroundTruth]:
    """Simulate the corpus; byte-identical output for identical configs.

    Abnormal events each occur on exactly one trip (assigned without
    replacement while trips remain). Ground truth records the planted
    abnormal coordinates and every sample index that falls inside an
    abnormal dwell.
    """
    ss = np.random.SeedSequence(cfg.seed)
    children = ss.spawn(cfg.n_trips + 1)
    assign_rng = np.random.default_rng(children[0])

    order = assign_rng.permutation(cfg.n_trips)
    per_trip_events: dict[int, list[tuple[PlantedAbnormal, int]]] = {}
    for idx, ev in enumerate(cfg.planted_abnormal):
        trip_no = int(order[idx % cfg.n_trips])
        per_trip_events.setdefault(trip_no, []).append((ev, idx))

    date0 = datetime.date.fromisoformat(cfg.start_date)
    trips: list[Trip] = []
    truth_stops: list[AbnormalStopTruth] = []
    truth_samples: set[tuple[str, int]] = set()
    truth_meta: dict[int, AbnormalStopTruth] = {}

    for trip_no in range(cfg.n_trips):
        rng = np.random.default_rng(children[trip_no + 1])
        trip_id = (date0 + datetime.timedelta(days=trip_no)).isoformat()
        trip_events = per_trip_events.get(trip_no, [])
        phases = _build_timeline(cfg, rng, trip_events)
        durations = {idx: ev.duration_s for ev, idx in trip_events}
        kinds = {idx: ev.kind for ev, idx in trip_events}
        for ph in phases:
            if ph.truth_index >= 0:
                # a jam may have crept past the configured position, so the
                # recorded coordinate is where the dwell actually happened
                lng, lat = _route_lnglat(cfg.route_origin, ph.x)
                truth_meta[ph.truth_index] = AbnormalStopTruth(
                    lng=lng,
                    lat=lat,
                    duration_s=durations[ph.truth_index],
                    kind=kinds[ph.truth_index],
                    trip_id=trip_id,
                )
        t_end = phases[-1].t1

        times = [0.0]
        while True:
            step = rng.uniform(*cfg.sampling_interval_range)
            nxt = times[-1] + step
            if nxt >= t_end:
                break
            times.append(nxt)

        gap_windows = []
        for _ in range(cfg.gaps_per_trip):
            g0 = rng.uniform(0.05, 0.9) * t_end
            gap_windows.append((g0, g0 + rng.uniform(*cfg.gap_duration_range)))
        times = [
            t for t in times if not any(g0 <= t < g1 for g0, g1 in gap_windows)
        ]

        frozen_fix: dict[int, tuple[float, float]] = {}
        points: list[GpsPoint] = []
        abnormal_point_idxs: list[int] = []
        phase_ptr = 0
        for t in times:
            while phases[phase_ptr].t1 < t:
                phase_ptr += 1
            ph = phases[phase_ptr]
            if ph.v_kmh > 0:
                x = ph.x + (t - ph.t0) * ph.v_kmh / 3.6
            else:
                x = ph.x
            lng, lat = _route_lnglat(cfg.route_origin, x)

            if ph.frozen:
                if phase_ptr not in frozen_fix:
                    frozen_fix[phase_ptr] = (
                        rng.normal(0.0, cfg.gps_noise_sigma_m),
                        rng.normal(0.0, cfg.gps_noise_sigma_m),
                    )
                noise_e, noise_n = frozen_fix[phase_ptr]
            else:
                noise_e = rng.normal(0.0, cfg.gps_noise_sigma_m)
                noise_n = rng.normal(0.0, cfg.gps_noise_sigma_m)
            lat_noisy = lat + noise_n / METERS_PER_DEG_LAT
            lng_noisy = lng + noise_e / (
                METERS_PER_DEG_LAT * np.cos(np.radians(lat))
            )

            if ph.v_kmh > 0:
                v = max(0.0, ph.v_kmh + rng.normal(0.0, cfg.speed_noise_kmh))
                s = 0.0
            else:
                v = 0.0
                if ph.engine_off:
                    s = max(1.0, ph.stay_s * (1.0 + rng.normal(0.0, cfg.stay_noise_frac)))
                else:
                    s = 0.0

            if ph.engine_off and ph.truth_index >= 0:
                abnormal_point_idxs.append(len(points))
            points.append(
                GpsPoint(
                    lng=float(lng_noisy),
                    lat=float(lat_noisy),
                    t=float(t),
                    v=float(v),
                    s=float(s),
                    f=ph.engine_off,
                )
            )

        # fill derived distances from the reported (noisy) positions
        filled: list[GpsPoint] = []
        cumulative = 0.0
        for i, p in enumerate(points):
            d_prev = 0.0 if i == 0 else haversine_ll(
                filled[-1].lng, filled[-1].lat, p.lng, p.lat
            )
            cumulative += d_prev
            filled.append(
                GpsPoint(
                    lng=p.lng, lat=p.lat, t=p.t, v=p.v, s=p.s, f=p.f,
                    d_prev=d_prev, d_start=cumulative,
                )
            )
        max_gap = max(b.t - a.t for a, b in zip(filled, filled[1:]))
        trips.append(Trip(id=trip_id, points=tuple(filled), max_interval=max_gap))
        for idx in abnormal_point_idxs:
            truth_samples.add((trip_id, idx))

    truth_stops = [truth_meta[i] for i in sorted(truth_meta)]
    return trips, GroundTruth(stops=truth_stops, abnormal_samples=truth_samples)


def write_trips_csv(trips: list[Trip], path: str) -> None:
    """Write trips in the standard attribute schema; floats carry full
    repr precision so a reload reproduces the corpus exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for trip in trips:
            for p in trip.points:
                fh.write(
                    f"{p.lng!r},{p.lat!r},{p.s!r},{p.v!r},"
                    f"{p.d_prev!r},{p.d_start!r},{trip.id},{p.t!r}\n"
                )


def export(
    trips: list[Trip], truth: GroundTruth, out_dir: str
) -> tuple[str, str]:
    """Write the corpus CSV and the ground-truth sidecar JSON."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "trips.csv")
    truth_path = os.path.join(out_dir, "ground_truth.json")
    write_trips_csv(trips, csv_path)
    with open(truth_path, "w", encoding="utf-8") as fh:
        json.dump(truth.to_dict(), fh, indent=2, sort_keys=True)
    return csv_path, truth_path


def default_corpus_config(seed: int = 0) -> SynthConfig:
    """The stock desk-scale corpus used by the evaluation harness."""
    return SynthConfig(seed=seed)


def synth_config_from_dict(data: dict) -> SynthConfig:
    """Hydrate a config from parsed JSON (stop lists and ranges included)."""
    kwargs = dict(data)
    if "planted_normal_stops" in kwargs:
        kwargs["planted_normal_stops"] = [
            PlantedStop(**rec) for rec in kwargs["planted_normal_stops"]
        ]
    if "planted_abnormal" in kwargs:
        kwargs["planted_abnormal"] = [
            PlantedAbnormal(**rec) for rec in kwargs["planted_abnormal"]
        ]
    for key in (
        "sampling_interval_range", "jam_duration_range", "jam_pause_range",
        "gap_duration_range", "route_origin",
    ):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return SynthConfig(**kwargs)
