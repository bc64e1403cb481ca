"""Trip segmentation: adaptive spatial-temporal thresholds plus a
fixed-length baseline.

The adaptive segmenter derives break thresholds from each trip's own
hop statistics (mean plus a sensitivity multiple of the population
standard deviation), so trips with heterogeneous sampling densities
break where their local density actually changes. The fixed-length
segmenter cuts every ``interval_m`` meters of along-track distance and
exists for ablation comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geo import Trip, haversine


@dataclass(frozen=True)
class Segment:
    """A contiguous index range of one trip with cached motion stats."""

    trip_id: str
    start_idx: int
    end_idx: int          # inclusive
    length_m: float
    v_mean: float
    v_max: float
    n_points: int
    total_stay: float

    def __post_init__(self) -> None:
        if self.start_idx > self.end_idx:
            raise ValueError("start_idx must be <= end_idx")

    def contains(self, point_index: int) -> bool:
        return self.start_idx <= point_index <= self.end_idx


@dataclass(frozen=True)
class SasThresholds:
    """Adaptive break thresholds and the hop statistics behind them."""

    lambda_d: float
    lambda_t: float
    alpha: float
    beta: float
    mu_d: float
    sigma_d: float
    mu_t: float
    sigma_t: float


def _hops(trip: Trip) -> tuple[list[float], list[float]]:
    """Consecutive-pair distances (m) and time gaps (s) of a trip."""
    dists = []
    gaps = []
    for a, b in zip(trip.points, trip.points[1:]):
        dists.append(haversine(a, b))
        gaps.append(b.t - a.t)
    return dists, gaps


def _mean_std(values: list[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


def compute_thresholds(trip: Trip, alpha: float, beta: float) -> SasThresholds:
    """Adaptive thresholds from this trip's hop mean and population std."""
    if len(trip.points) < 2:
        raise ValueError("trip needs at least 2 points")
    dists, gaps = _hops(trip)
    mu_d, sigma_d = _mean_std(dists)
    mu_t, sigma_t = _mean_std(gaps)
    return SasThresholds(
        lambda_d=mu_d + alpha * sigma_d,
        lambda_t=mu_t + beta * sigma_t,
        alpha=alpha,
        beta=beta,
        mu_d=mu_d,
        sigma_d=sigma_d,
        mu_t=mu_t,
        sigma_t=sigma_t,
    )


def segment_break(d: float, dt: float, thr: SasThresholds) -> bool:
    """True when a hop exceeds either adaptive threshold (strictly)."""
    return d > thr.lambda_d or dt > thr.lambda_t


def _make_segment(trip: Trip, start: int, end: int, dists: list[float]) -> Segment:
    pts = trip.points[start : end + 1]
    speeds = [p.v for p in pts]
    return Segment(
        trip_id=trip.id,
        start_idx=start,
        end_idx=end,
        length_m=sum(dists[start:end]),
        v_mean=sum(speeds) / len(speeds),
        v_max=max(speeds),
        n_points=len(pts),
        total_stay=sum(p.s for p in pts),
    )


def segment_trip(trip: Trip, thr: SasThresholds) -> list[Segment]:
    """Greedy left-to-right scan; a breaking hop closes the segment before it.

    The returned segments tile the trip's index range exactly: every
    intra-segment hop satisfies both thresholds, every boundary hop
    violates at least one.
    """
    dists, gaps = _hops(trip)
    segments = []
    start = 0
    for i in range(len(dists)):
        if segment_break(dists[i], gaps[i], thr):
            segments.append(_make_segment(trip, start, i, dists))
            start = i + 1
    segments.append(_make_segment(trip, start, len(trip.points) - 1, dists))
    return segments


def segment_fixed(trip: Trip, interval_m: float) -> list[Segment]:
    """Uniform partition: cut whenever cumulative along-track distance
    crosses the next multiple of ``interval_m``.

    The point that crosses a mark still joins the segment it closes, so
    each segment spans its interval plus at most one point's overshoot.
    """
    if interval_m <= 0:
        raise ValueError("interval_m must be > 0")
    dists, _ = _hops(trip)
    segments = []
    start = 0
    cum = 0.0
    mark = interval_m
    for i, d in enumerate(dists):
        cum += d
        if cum > mark:
            segments.append(_make_segment(trip, start, i + 1, dists))
            start = i + 2
            mark = interval_m * (math.floor(cum / interval_m) + 1)
    if start <= len(trip.points) - 1:
        segments.append(_make_segment(trip, start, len(trip.points) - 1, dists))
    return segments
