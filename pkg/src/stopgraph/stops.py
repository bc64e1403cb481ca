"""Rule-based stop classification for sparse GPS samples.

Each point is tested against four cases: an explicit stop (reported
speed zero with positive stay time), an inferred stop (estimated
velocity near zero over a short displacement), an extended-duration
abnormal stop, and a low-speed short pause. The result is one of
no-stop, normal stop, or the two abnormal variants.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from .geo import GpsPoint, Trip, haversine

MPS_TO_KMH = 3.6


class StopKind(Enum):
    NORMAL = "normal"
    ABNORMAL_DURATION = "abnormal_duration"
    ABNORMAL_LOW_SPEED = "abnormal_low_speed"


@dataclass(frozen=True)
class StopEvent:
    """A stop-classified point within a trip."""

    point_index: int
    kind: StopKind
    est_velocity: float
    stay: float


@dataclass(frozen=True)
class DetectorConfig:
    """Thresholds for the stop classification rules.

    ``s_route`` is the route's mean stay time at historical stops; leave
    it None to have it computed from the corpus (``resolve_route_stay``).
    ``duration_factor`` realizes "much larger than the route mean" as a
    plain multiplier.
    """

    d_threshold: float = 200.0      # meters
    v_low: float = 5.0              # km/h
    s_min: float = 40.0             # seconds
    v_m: float = 0.0                # km/h velocity margin
    eps_v: float = 0.5              # km/h zero tolerance
    duration_factor: float = 3.0
    s_route: Optional[float] = None # seconds
    fallback_stay: float = 60.0     # seconds, used when no stops found

    def __post_init__(self) -> None:
        for name in ("d_threshold", "v_low", "s_min", "eps_v", "duration_factor",
                     "fallback_stay"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.v_m < 0:
            raise ValueError("v_m must be >= 0")
        if self.s_route is not None and self.s_route <= 0:
            raise ValueError("s_route must be > 0 when given")


def estimate_velocity(p_i: GpsPoint, p_next: GpsPoint, v_m: float = 0.0) -> float:
    """Estimate km/h velocity at ``p_i`` from the hop to the next sample.

    The displacement is assumed to cover an out-and-back worst case, so
    the average is twice the distance over the gap, plus the margin
    ``v_m`` that absorbs GPS noise under sparse sampling.
    """
    dt = p_next.t - p_i.t
    if dt <= 0:
        raise ValueError(f"non-positive time gap {dt}")
    d = haversine(p_i, p_next)
    return (2.0 * d / dt) * MPS_TO_KMH + v_m


def _is_stop(p_i: GpsPoint, p_next: GpsPoint, cfg: DetectorConfig) -> tuple[bool, float]:
    """Apply the two stop-detection cases; returns (stopped, est_velocity)."""
    est = estimate_velocity(p_i, p_next, cfg.v_m)
    if p_i.v <= cfg.eps_v and p_i.s > 0:
        return True, est
    if est <= cfg.eps_v and haversine(p_i, p_next) <= cfg.d_threshold:
        return True, est
    return False, est


def classify_point(
    p_i: GpsPoint, p_next: GpsPoint, cfg: DetectorConfig
) -> Optional[StopEvent]:
    """Classify ``p_i`` given its successor; None means no stop.

    Detected stops escalate to the extended-duration kind when the stay
    exceeds ``duration_factor`` times the route mean, else to the
    low-speed-pause kind when the estimated velocity and stay both fall
    in the short-pause box, else stay normal. ``point_index`` is left 0
    and filled by ``detect_stops``.
    """
    if cfg.s_route is None:
        raise ValueError("s_route unresolved; call resolve_route_stay first")
    stopped, est = _is_stop(p_i, p_next, cfg)
    if not stopped:
        return None
    if p_i.s > cfg.duration_factor * cfg.s_route:
        kind = StopKind.ABNORMAL_DURATION
    elif 0 < est <= cfg.v_low and 0 < p_i.s <= cfg.s_min:
        kind = StopKind.ABNORMAL_LOW_SPEED
    else:
        kind = StopKind.NORMAL
    return StopEvent(point_index=0, kind=kind, est_velocity=est, stay=p_i.s)


def detect_stops(trip: Trip, cfg: DetectorConfig) -> list[StopEvent]:
    """Classify every point of a trip (the last point has no successor)."""
    events = []
    for i in range(len(trip.points) - 1):
        ev = classify_point(trip.points[i], trip.points[i + 1], cfg)
        if ev is not None:
            events.append(replace(ev, point_index=i))
    return events


def route_mean_stay(trips: list[Trip], cfg: DetectorConfig) -> float:
    """Mean stay time over stop-detected points across all trips.

    Only the two stop-detection cases are applied (no abnormal
    escalation, which itself needs this mean). Falls back to
    ``cfg.fallback_stay`` when no stop is detected anywhere.
    """
    if not trips:
        raise ValueError("empty trip list")
    stays: list[float] = []
    for trip in trips:
        for i in range(len(trip.points) - 1):
            stopped, _ = _is_stop(trip.points[i], trip.points[i + 1], cfg)
            if stopped:
                stays.append(trip.points[i].s)
    if not stays:
        return cfg.fallback_stay
    return sum(stays) / len(stays)


def resolve_route_stay(trips: list[Trip], cfg: DetectorConfig) -> DetectorConfig:
    """Return a config whose ``s_route`` is filled in (computed if unset)."""
    if cfg.s_route is not None:
        return cfg
    return replace(cfg, s_route=route_mean_stay(trips, cfg))
