"""Per-stop indicator features and segment confidence.

Three indicators describe each stop-classified point: a robust z-score
of its stay time against its segment (tis), the segment's speed
irregularity (msd), and a softmax-weighted aggregate of the segment's
longest normalized stays (tta_k). A density-and-stability confidence
score weights them downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geo import Trip
from .segmentation import Segment
from .stops import StopEvent


@dataclass(frozen=True)
class IndicatorParams:
    k: int = 3            # stays aggregated by tta_k
    delta: float = 0.1    # msd mean-speed sensitivity
    eps: float = 1e-6     # numeric floor for denominators

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.delta < 0 or self.eps <= 0:
            raise ValueError("delta must be >= 0 and eps > 0")


@dataclass(frozen=True)
class NodeFeature:
    """Indicator vector of one stop-classified point, plus plumbing
    fields (trip, point index, position, time) used by the graph and
    evaluation stages."""

    node_id: int
    segment_id: str
    trip_id: str
    point_index: int
    lng: float
    lat: float
    t: float
    stay: float
    tis: float
    msd: float
    tta_k: float
    confidence: float

    def vector(self) -> tuple[float, float, float]:
        return (self.tis, self.msd, self.tta_k)


def tis(stay: float, segment_stays: list[float], eps: float = 1e-6) -> float:
    """Deviation of one stay from its segment's stay distribution.

    (stay - median) over (population std + eps), clipped to [0, 3] on
    both sides so extreme outliers saturate and below-median stays
    contribute nothing.
    """
    if not segment_stays:
        raise ValueError("segment has no stops")
    med = float(np.median(segment_stays))
    sigma = float(np.std(segment_stays))
    raw = (stay - med) / (sigma + eps)
    return min(3.0, max(0.0, raw))


def msd(v_max: float, v_mean: float, delta: float) -> float:
    """Speed irregularity of a segment: range plus a delta-weighted mean.

    Tolerates float dust where a mean of equal values rounds above the
    max; genuine v_max < v_mean is rejected.
    """
    if v_max < v_mean:
        if v_mean - v_max > 1e-9 * max(1.0, v_mean):
            raise ValueError(f"v_max {v_max} < v_mean {v_mean}")
        v_max = v_mean
    return (v_max - v_mean) + delta * v_mean


def topk_softmax_weights(values: list[float], k: int) -> tuple[list[float], list[float]]:
    """Top-min(k, n) values in descending order and their softmax weights."""
    top = sorted(values, reverse=True)[: min(k, len(values))]
    exps = [math.exp(v) for v in top]
    total = sum(exps)
    return top, [e / total for e in exps]


def tta_k(segment_stays: list[float], k: int, normalize: bool = True) -> float:
    """Softmax-weighted aggregate of a segment's k longest stays.

    Stays are normalized by the segment maximum so the softmax
    temperature is comparable across segments; pass ``normalize=False``
    to aggregate raw values. Returns 0 for a segment without stops or
    with all-zero stays.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not segment_stays:
        return 0.0
    if normalize:
        top = max(segment_stays)
        if top <= 0:
            return 0.0
        values = [s / top for s in segment_stays]
    else:
        values = list(segment_stays)
    top_vals, weights = topk_softmax_weights(values, k)
    return sum(w * v for w, v in zip(weights, top_vals))


def confidence(
    n_points: int, n_max: int, v_avg: float, v_max: float, eps: float = 1e-6
) -> float:
    """Segment reliability: density ratio times speed-stability ratio.

    A fully stationary segment (v_max = 0) degrades to the density
    ratio so idle-but-dense segments are not silenced.
    """
    if n_max <= 0:
        raise ValueError("n_max must be > 0")
    if n_points < 0 or n_points > n_max:
        raise ValueError("need 0 <= n_points <= n_max")
    density = n_points / n_max
    if v_max == 0:
        return density
    return density * (v_avg / (v_max + eps))


def features_for_trip(
    trip: Trip,
    segments: list[Segment],
    stop_events: list[StopEvent],
    params: IndicatorParams,
    start_node_id: int = 0,
) -> list[NodeFeature]:
    """One feature per stop event: tis from the stop's own stay within
    its segment; msd, tta_k and confidence inherited from the segment.

    ``n_max`` for the confidence score is the largest segment point
    count within this trip. Node ids are assigned sequentially from
    ``start_node_id`` in point order.
    """
    seg_of_point: dict[int, int] = {}
    for si, seg in enumerate(segments):
        for pi in range(seg.start_idx, seg.end_idx + 1):
            seg_of_point[pi] = si

    stays_by_seg: dict[int, list[float]] = {}
    for ev in stop_events:
        stays_by_seg.setdefault(seg_of_point[ev.point_index], []).append(ev.stay)

    n_max = max(seg.n_points for seg in segments)
    seg_level: dict[int, tuple[float, float, float]] = {}
    for si, stays in stays_by_seg.items():
        seg = segments[si]
        seg_level[si] = (
            msd(seg.v_max, seg.v_mean, params.delta),
            tta_k(stays, params.k),
            confidence(seg.n_points, n_max, seg.v_mean, seg.v_max, params.eps),
        )

    features = []
    for offset, ev in enumerate(sorted(stop_events, key=lambda e: e.point_index)):
        si = seg_of_point[ev.point_index]
        seg_msd, seg_tta, seg_conf = seg_level[si]
        point = trip.points[ev.point_index]
        features.append(
            NodeFeature(
                node_id=start_node_id + offset,
                segment_id=f"{trip.id}#{si}",
                trip_id=trip.id,
                point_index=ev.point_index,
                lng=point.lng,
                lat=point.lat,
                t=point.t,
                stay=ev.stay,
                tis=tis(ev.stay, stays_by_seg[si], params.eps),
                msd=seg_msd,
                tta_k=seg_tta,
                confidence=seg_conf,
            )
        )
    return features
