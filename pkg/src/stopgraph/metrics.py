"""Ranking metrics, segment-level aggregation, and spatial matching.

AUC is the Mann-Whitney probability that a random positive outranks a
random negative, with ties worth half. Average precision is the
step-wise estimator (mean of precision at each positive's rank).
Spatial matching pairs each ground-truth stop with its nearest
predicted coordinate by great-circle distance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geo import haversine_ll


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Probability that a random positive scores above a random
    negative; ties count 0.5. Requires both classes present."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present")

    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=float)
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0   # average rank, 1-based
        i = j + 1

    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Step-wise average precision: mean of precision at each positive's
    rank, scores sorted descending (stable on ties)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_pos = int((y == 1).sum())
    if n_pos == 0:
        raise ValueError("at least one positive is required")

    order = np.argsort(-s, kind="mergesort")
    tp = 0
    total = 0.0
    for rank, idx in enumerate(order, start=1):
        if y[idx] == 1:
            tp += 1
            total += tp / rank
    return float(total / n_pos)


def aggregate_segments(
    node_abnormal: Sequence[bool], node_segments: Sequence[str]
) -> set[str]:
    """Segments containing at least one node predicted abnormal."""
    if len(node_abnormal) != len(node_segments):
        raise ValueError("predictions and segment ids must align")
    return {seg for flag, seg in zip(node_abnormal, node_segments) if flag}


@dataclass(frozen=True)
class MatchRecord:
    gt_lng: float
    gt_lat: float
    pred_lng: float
    pred_lat: float
    meters: float


@dataclass
class SpatialMatchResult:
    matches: list[MatchRecord]
    mean_m: float
    median_m: float
    failed: bool = False


def spatial_match(
    ground_truth: Sequence[tuple[float, float]],
    predicted: Sequence[tuple[float, float]],
) -> SpatialMatchResult:
    """Nearest predicted coordinate for each ground-truth stop.

    Coordinates are (lng, lat) pairs. One predicted point may serve
    several ground truths. An empty prediction set yields a failed
    result with no matches rather than an exception.
    """
    if not predicted:
        return SpatialMatchResult(
            matches=[], mean_m=float("nan"), median_m=float("nan"), failed=True
        )
    matches = []
    for g_lng, g_lat in ground_truth:
        best = min(
            predicted,
            key=lambda p: (haversine_ll(g_lng, g_lat, p[0], p[1]), p),
        )
        matches.append(
            MatchRecord(
                gt_lng=g_lng,
                gt_lat=g_lat,
                pred_lng=best[0],
                pred_lat=best[1],
                meters=haversine_ll(g_lng, g_lat, best[0], best[1]),
            )
        )
    dists = [m.meters for m in matches]
    return SpatialMatchResult(
        matches=matches,
        mean_m=float(np.mean(dists)) if dists else float("nan"),
        median_m=float(np.median(dists)) if dists else float("nan"),
    )


@dataclass
class EvalReport:
    """Run-level evaluation summary, before and after self-training."""

    variant: str = "full"
    seed: int = 0
    auc: Optional[float] = None
    ap: Optional[float] = None
    auc_before: Optional[float] = None
    ap_before: Optional[float] = None
    abnormal_nodes: int = 0
    abnormal_nodes_before: int = 0
    abnormal_segments: int = 0
    abnormal_segments_before: int = 0
    match_distances: list[float] = field(default_factory=list)
    mean_dist: float = float("nan")
    median_dist: float = float("nan")
    skipped_nodes: int = 0
    edges: int = 0
    nodes: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        def clean(value):
            if isinstance(value, float) and math.isnan(value):
                return None
            return value

        return {
            "variant": self.variant,
            "seed": self.seed,
            "auc": clean(self.auc),
            "ap": clean(self.ap),
            "auc_before": clean(self.auc_before),
            "ap_before": clean(self.ap_before),
            "abnormal_nodes": self.abnormal_nodes,
            "abnormal_nodes_before": self.abnormal_nodes_before,
            "abnormal_segments": self.abnormal_segments,
            "abnormal_segments_before": self.abnormal_segments_before,
            "match_distances": list(self.match_distances),
            "mean_dist": clean(self.mean_dist),
            "median_dist": clean(self.median_dist),
            "skipped_nodes": self.skipped_nodes,
            "edges": self.edges,
            "nodes": self.nodes,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
