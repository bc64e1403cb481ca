"""End-to-end pipeline: ingest through evaluation, with per-stage artifacts.

Stages run in a fixed order (stop detection, segmentation, indicators,
confidence-gated smoothing, graph construction, label propagation,
pseudo-label gating, classifier training, self-training, evaluation)
and each writes one numbered artifact into the run directory. The
effective configuration is echoed into every run; identical config
hashes make a rerun a no-op unless forced.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import gcn as gcn_mod
from . import propagation as prop_mod
from .geo import IngestReport, Trip, haversine_ll
from .graph import GraphParams, StGraph, build_graph, rbf_affinity
from .indicators import IndicatorParams, NodeFeature, features_for_trip
from .metrics import EvalReport, aggregate_segments, auc, average_precision, spatial_match
from .segmentation import Segment, compute_thresholds, segment_fixed, segment_trip
from .smoothing import LtigaParams, apply_ltiga
from .stops import DetectorConfig, StopEvent, detect_stops, resolve_route_stay
from .synth import GroundTruth

logger = logging.getLogger(__name__)

VARIANTS = ("full", "fixed-seg", "no-ltiga", "no-rescale", "gcn-only")

STAGE_FILES = [
    "01_ingest.json",
    "02_stops.csv",
    "03_segments.json",
    "04_indicators.csv",
    "05_smoothed.csv",
    "06_graph.json",
    "07_propagation.csv",
    "08_pseudo_labels.json",
    "09_train_history.csv",
    "10_self_train.json",
    "11_eval_report.json",
]


@dataclass
class PipelineConfig:
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    sas_alpha: float = 2.0
    sas_beta: float = 2.0
    fixed_interval_m: float = 2000.0
    indicators: IndicatorParams = field(default_factory=IndicatorParams)
    ltiga: LtigaParams = field(default_factory=LtigaParams)
    graph: GraphParams = field(default_factory=GraphParams)
    gate: prop_mod.GateConfig = field(default_factory=prop_mod.GateConfig)
    propagation: prop_mod.PropagationConfig = field(
        default_factory=prop_mod.PropagationConfig
    )
    train: gcn_mod.TrainConfig = field(default_factory=gcn_mod.TrainConfig)
    variant: str = "full"
    seed: int = 0
    n_abnormal_seeds: int = 10
    n_normal_seeds: int = 60

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")


def config_to_dict(cfg: PipelineConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(data: dict) -> PipelineConfig:
    """Build a config from a (possibly partial) nested dictionary."""
    nested = {
        "detector": DetectorConfig,
        "indicators": IndicatorParams,
        "ltiga": LtigaParams,
        "graph": GraphParams,
        "gate": prop_mod.GateConfig,
        "propagation": prop_mod.PropagationConfig,
        "train": gcn_mod.TrainConfig,
    }
    kwargs = {}
    for key, value in data.items():
        if key in nested and isinstance(value, dict):
            kwargs[key] = nested[key](**value)
        else:
            kwargs[key] = value
    return PipelineConfig(**kwargs)


def config_hash(cfg: PipelineConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def apply_overrides(cfg: PipelineConfig, overrides: list[str]) -> PipelineConfig:
    """Apply dotted ``section.field=value`` overrides to a config."""
    data = config_to_dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        path, raw = item.split("=", 1)
        keys = path.split(".")
        target = data
        for key in keys[:-1]:
            if key not in target:
                raise ValueError(f"unknown config section {key!r}")
            target = target[key]
        leaf = keys[-1]
        if leaf not in target:
            raise ValueError(f"unknown config key {path!r}")
        current = target[leaf]
        if isinstance(current, bool):
            target[leaf] = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int) and not isinstance(current, bool):
            target[leaf] = int(raw)
        elif isinstance(current, float):
            target[leaf] = float(raw)
        elif current is None:
            target[leaf] = float(raw)
        else:
            target[leaf] = raw
    return config_from_dict(data)


@dataclass(frozen=True)
class SeedSelector:
    """One row of a seed-label file: a node id or a coordinate circle."""

    cls: int
    node_id: Optional[int] = None
    lng: Optional[float] = None
    lat: Optional[float] = None
    radius_m: Optional[float] = None


_CLASS_NAMES = {"abnormal": prop_mod.ABNORMAL, "normal": prop_mod.NORMAL,
                "0": prop_mod.ABNORMAL, "1": prop_mod.NORMAL}


def parse_seed_labels(path: str) -> list[SeedSelector]:
    """Parse a seed-label file.

    Each non-comment line is either ``node_id,class`` or
    ``lng,lat,radius_m,class`` with class one of abnormal/normal/0/1.
    """
    selectors = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            cls_raw = parts[-1].lower()
            if cls_raw not in _CLASS_NAMES:
                raise ValueError(f"line {line_no}: unknown class {parts[-1]!r}")
            cls = _CLASS_NAMES[cls_raw]
            if len(parts) == 2:
                selectors.append(SeedSelector(cls=cls, node_id=int(parts[0])))
            elif len(parts) == 4:
                selectors.append(
                    SeedSelector(
                        cls=cls,
                        lng=float(parts[0]),
                        lat=float(parts[1]),
                        radius_m=float(parts[2]),
                    )
                )
            else:
                raise ValueError(f"line {line_no}: expected 2 or 4 fields")
    return selectors


def resolve_seed_selectors(
    selectors: list[SeedSelector], features: list[NodeFeature]
) -> dict[int, int]:
    """Resolve selectors to node indices; coordinate selectors pick the
    nearest stop node within their radius, unresolvable ones are skipped
    with a warning."""
    seeds: dict[int, int] = {}
    for sel in selectors:
        if sel.node_id is not None:
            if not 0 <= sel.node_id < len(features):
                logger.warning("seed node id %d out of range, skipped", sel.node_id)
                continue
            seeds[sel.node_id] = sel.cls
            continue
        best = None
        best_dist = float("inf")
        for idx, feat in enumerate(features):
            dist = haversine_ll(sel.lng, sel.lat, feat.lng, feat.lat)
            if dist < best_dist:
                best, best_dist = idx, dist
        if best is None or best_dist > sel.radius_m:
            logger.warning(
                "no stop node within %.0f m of (%.4f, %.4f), selector skipped",
                sel.radius_m or 0.0, sel.lng, sel.lat,
            )
            continue
        seeds[best] = sel.cls
    return seeds


def sample_seeds(
    gt_abnormal: np.ndarray, cfg: PipelineConfig
) -> dict[int, int]:
    """Sample seed labels from ground truth, deterministically per seed."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(11,)))
    abn_idx = np.flatnonzero(gt_abnormal)
    norm_idx = np.flatnonzero(~gt_abnormal)
    if len(abn_idx) == 0 or len(norm_idx) == 0:
        raise ValueError("ground truth must contain both classes to sample seeds")
    n_abn = min(cfg.n_abnormal_seeds, len(abn_idx))
    n_norm = min(cfg.n_normal_seeds, len(norm_idx))
    seeds = {}
    for idx in rng.choice(abn_idx, size=n_abn, replace=False):
        seeds[int(idx)] = prop_mod.ABNORMAL
    for idx in rng.choice(norm_idx, size=n_norm, replace=False):
        seeds[int(idx)] = prop_mod.NORMAL
    return seeds


@dataclass
class PipelineResult:
    report: EvalReport
    features: list[NodeFeature]
    graph: StGraph
    state: prop_mod.LabelState
    labels: np.ndarray
    probs_before: np.ndarray
    probs_after: np.ndarray
    gt_abnormal: Optional[np.ndarray]
    segments: dict[str, list[Segment]]
    stops: dict[str, list[StopEvent]]
    out_dir: Optional[str] = None
    skipped_rerun: bool = False


def _segment_trips(
    trips: list[Trip], cfg: PipelineConfig
) -> dict[str, list[Segment]]:
    fixed = cfg.variant in ("fixed-seg", "gcn-only")
    segments = {}
    for trip in trips:
        if fixed:
            segments[trip.id] = segment_fixed(trip, cfg.fixed_interval_m)
        else:
            thr = compute_thresholds(trip, cfg.sas_alpha, cfg.sas_beta)
            segments[trip.id] = segment_trip(trip, thr)
    return segments


def run_pipeline(
    trips: list[Trip],
    truth: Optional[GroundTruth],
    cfg: PipelineConfig,
    seed_labels: Optional[dict[int, int] | list[SeedSelector]] = None,
    out_dir: Optional[str] = None,
    force: bool = False,
    ingest_report: Optional[IngestReport] = None,
) -> PipelineResult:
    """Run every stage over in-memory trips.

    Seeds come from ``seed_labels`` when given (node ids or coordinate
    selectors), otherwise they are sampled from the ground truth. With
    an ``out_dir`` every stage writes its artifact; a rerun with an
    identical config hash is skipped unless ``force``.
    """
    cfg_hash = config_hash(cfg)
    if out_dir and not force and _is_complete_run(out_dir, cfg_hash):
        logger.info("run %s already complete for config %s, skipping", out_dir, cfg_hash)
        report = _load_report(out_dir)
        return PipelineResult(
            report=report, features=[], graph=StGraph([], []), state=None,
            labels=np.empty(0), probs_before=np.empty((0, 2)),
            probs_after=np.empty((0, 2)), gt_abnormal=None, segments={}, stops={},
            out_dir=out_dir, skipped_rerun=True,
        )

    detector = resolve_route_stay(trips, cfg.detector)
    stops = {trip.id: detect_stops(trip, detector) for trip in trips}
    segments = _segment_trips(trips, cfg)

    features: list[NodeFeature] = []
    for trip in trips:
        features.extend(
            features_for_trip(
                trip, segments[trip.id], stops[trip.id], cfg.indicators,
                start_node_id=len(features),
            )
        )
    if not features:
        raise RuntimeError("stage indicators: no stop nodes detected in the corpus")

    if cfg.variant in ("no-ltiga", "gcn-only"):
        smoothed = list(features)
    elif cfg.variant == "no-rescale":
        smoothed = apply_ltiga(features, replace(cfg.ltiga, rescale=False))
    else:
        smoothed = apply_ltiga(features, cfg.ltiga)

    graph = build_graph(smoothed, cfg.graph)
    affinity = rbf_affinity(graph, cfg.graph.sigma_rbf)

    gt_abnormal = None
    if truth is not None:
        gt_abnormal = np.array(
            [truth.is_abnormal(f.trip_id, f.point_index) for f in smoothed], dtype=bool
        )

    if seed_labels is None:
        if gt_abnormal is None:
            raise ValueError("seed labels are required when no ground truth is given")
        seeds = sample_seeds(gt_abnormal, cfg)
    elif isinstance(seed_labels, dict):
        seeds = dict(seed_labels)
    else:
        seeds = resolve_seed_selectors(seed_labels, smoothed)
    classes = set(seeds.values())
    if prop_mod.ABNORMAL not in classes or prop_mod.NORMAL not in classes:
        raise ValueError("need at least one seed label per class")

    state = prop_mod.propagate(
        affinity, seeds, cfg.propagation.max_iters, cfg.propagation.tol
    )
    state, gate_counts = prop_mod.gate_pseudo_labels(state, cfg.gate)
    labels = state.labels.copy()

    train_seed = int(
        np.random.SeedSequence(cfg.seed, spawn_key=(23,)).generate_state(1)[0]
    )
    train_cfg = replace(cfg.train, seed=train_seed)
    x = graph.feature_matrix()
    model = gcn_mod.init_model(graph, hidden=train_cfg.hidden, seed=train_seed)
    model, history = gcn_mod.train(model, graph, x, labels, train_cfg)
    probs_before = gcn_mod.forward(model, graph, x)
    st = gcn_mod.self_train(model, graph, x, labels, train_cfg)

    report = build_report(
        cfg, smoothed, graph, truth, gt_abnormal, state.seed_mask,
        probs_before, st.probs,
    )

    result = PipelineResult(
        report=report, features=smoothed, graph=graph, state=state,
        labels=st.labels, probs_before=probs_before, probs_after=st.probs,
        gt_abnormal=gt_abnormal, segments=segments, stops=stops, out_dir=out_dir,
    )
    if out_dir:
        _write_artifacts(
            out_dir, cfg, cfg_hash, trips, truth, result, history, st,
            gate_counts, seeds, model, ingest_report,
        )
    return result


def build_report(
    cfg: PipelineConfig,
    features: list[NodeFeature],
    graph: StGraph,
    truth: Optional[GroundTruth],
    gt_abnormal: Optional[np.ndarray],
    seed_mask: np.ndarray,
    probs_before: np.ndarray,
    probs_after: np.ndarray,
) -> EvalReport:
    """Evaluation summary over all ground-truth-labeled non-seed nodes."""
    report = EvalReport(
        variant=cfg.variant,
        seed=cfg.seed,
        nodes=graph.n,
        edges=len(graph.edges),
        skipped_nodes=graph.skipped_nodes,
    )
    pred_after = probs_after[:, prop_mod.ABNORMAL] > 0.5
    pred_before = probs_before[:, prop_mod.ABNORMAL] > 0.5
    seg_ids = [f.segment_id for f in features]
    report.abnormal_nodes = int(pred_after.sum())
    report.abnormal_nodes_before = int(pred_before.sum())
    report.abnormal_segments = len(aggregate_segments(pred_after.tolist(), seg_ids))
    report.abnormal_segments_before = len(
        aggregate_segments(pred_before.tolist(), seg_ids)
    )

    if gt_abnormal is None:
        report.notes.append("no ground truth: ranking metrics unavailable")
        return report

    eval_mask = ~seed_mask
    y = gt_abnormal[eval_mask].astype(int)
    if y.sum() == 0 or y.sum() == len(y):
        report.notes.append("eval set lacks one class: ranking metrics unavailable")
    else:
        report.auc = auc(probs_after[eval_mask, prop_mod.ABNORMAL], y)
        report.ap = average_precision(probs_after[eval_mask, prop_mod.ABNORMAL], y)
        report.auc_before = auc(probs_before[eval_mask, prop_mod.ABNORMAL], y)
        report.ap_before = average_precision(
            probs_before[eval_mask, prop_mod.ABNORMAL], y
        )

    gt_coords = [(s.lng, s.lat) for s in truth.stops]
    pred_coords = [
        (f.lng, f.lat) for f, flag in zip(features, pred_after) if flag
    ]
    match = spatial_match(gt_coords, pred_coords)
    if match.failed:
        report.notes.append("no abnormal predictions: spatial match failed")
    report.match_distances = [m.meters for m in match.matches]
    report.mean_dist = match.mean_m
    report.median_dist = match.median_m
    return report


# ---------------------------------------------------------------------------
# artifact writing

def _is_complete_run(out_dir: str, cfg_hash: str) -> bool:
    manifest = os.path.join(out_dir, "manifest.json")
    if not os.path.exists(manifest):
        return False
    try:
        with open(manifest, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError):
        return False
    if data.get("config_hash") != cfg_hash or not data.get("complete"):
        return False
    return all(os.path.exists(os.path.join(out_dir, name)) for name in STAGE_FILES)


def _load_report(out_dir: str) -> EvalReport:
    with open(os.path.join(out_dir, "11_eval_report.json"), encoding="utf-8") as fh:
        data = json.load(fh)
    report = EvalReport()
    for key, value in data.items():
        if hasattr(report, key):
            setattr(report, key, value)
    return report


def write_stops_csv(stops: dict[str, list[StopEvent]], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("trip_id,point_index,kind,est_velocity,stay\n")
        for trip_id in sorted(stops):
            for ev in stops[trip_id]:
                fh.write(
                    f"{trip_id},{ev.point_index},{ev.kind.value},"
                    f"{ev.est_velocity!r},{ev.stay!r}\n"
                )


def write_segments_json(
    segments: dict[str, list[Segment]], path: str
) -> None:
    payload = {}
    for trip_id in sorted(segments):
        payload[trip_id] = [
            {
                "start_idx": s.start_idx,
                "end_idx": s.end_idx,
                "length_m": s.length_m,
                "v_mean": s.v_mean,
                "v_max": s.v_max,
                "n_points": s.n_points,
                "total_stay": s.total_stay,
            }
            for s in segments[trip_id]
        ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def write_features_csv(features: list[NodeFeature], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            "node_id,segment_id,tis,msd,tta_k,confidence,"
            "trip_id,point_index,lng,lat,t,stay\n"
        )
        for f in features:
            fh.write(
                f"{f.node_id},{f.segment_id},{f.tis!r},{f.msd!r},{f.tta_k!r},"
                f"{f.confidence!r},{f.trip_id},{f.point_index},{f.lng!r},"
                f"{f.lat!r},{f.t!r},{f.stay!r}\n"
            )


def write_graph_json(graph: StGraph, path: str) -> None:
    payload = {
        "stats": graph.stats_dict(),
        "nodes": [
            {
                "node_id": n.node_id,
                "segment_id": n.segment_id,
                "trip_id": n.trip_id,
                "point_index": n.point_index,
                "time": n.time,
                "lng": n.lng,
                "lat": n.lat,
                "feature": list(n.feature),
            }
            for n in graph.nodes
        ],
        "edges": [
            {"i": e.i, "j": e.j, "kind": e.kind, "weight": e.weight}
            for e in graph.edges
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def load_graph_json(path: str) -> StGraph:
    from .graph import GraphEdge, GraphNode

    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    nodes = [
        GraphNode(
            node_id=n["node_id"], segment_id=n["segment_id"], trip_id=n["trip_id"],
            point_index=n["point_index"], time=n["time"], lng=n["lng"], lat=n["lat"],
            feature=tuple(n["feature"]),
        )
        for n in payload["nodes"]
    ]
    edges = [
        GraphEdge(i=e["i"], j=e["j"], weight=e["weight"], kind=e["kind"])
        for e in payload["edges"]
    ]
    return StGraph(
        nodes=nodes, edges=edges,
        skipped_nodes=payload["stats"]["skipped_nodes"],
    )


def read_stops_csv(path: str) -> dict[str, list[StopEvent]]:
    from .stops import StopKind

    stops: dict[str, list[StopEvent]] = {}
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            trip_id, idx, kind, est, stay = line.rstrip("\n").split(",")
            stops.setdefault(trip_id, []).append(
                StopEvent(
                    point_index=int(idx), kind=StopKind(kind),
                    est_velocity=float(est), stay=float(stay),
                )
            )
    return stops


def read_segments_json(path: str) -> dict[str, list[Segment]]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    segments: dict[str, list[Segment]] = {}
    for trip_id, rows in payload.items():
        segments[trip_id] = [
            Segment(
                trip_id=trip_id, start_idx=r["start_idx"], end_idx=r["end_idx"],
                length_m=r["length_m"], v_mean=r["v_mean"], v_max=r["v_max"],
                n_points=r["n_points"], total_stay=r["total_stay"],
            )
            for r in rows
        ]
    return segments


def read_features_csv(path: str) -> list[NodeFeature]:
    features = []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            (node_id, segment_id, tis_v, msd_v, tta_v, conf, trip_id, idx,
             lng, lat, t, stay) = line.rstrip("\n").split(",")
            features.append(
                NodeFeature(
                    node_id=int(node_id), segment_id=segment_id, trip_id=trip_id,
                    point_index=int(idx), lng=float(lng), lat=float(lat),
                    t=float(t), stay=float(stay), tis=float(tis_v),
                    msd=float(msd_v), tta_k=float(tta_v), confidence=float(conf),
                )
            )
    return features


def write_geojson_overlay(
    truth: Optional[GroundTruth],
    features: list[NodeFeature],
    pred_abnormal: np.ndarray,
    path: str,
) -> None:
    feats = []
    if truth is not None:
        for s in truth.stops:
            feats.append(
                {
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": [s.lng, s.lat]},
                    "properties": {"role": "ground_truth", "kind": s.kind,
                                   "trip_id": s.trip_id},
                }
            )
    for f, flag in zip(features, pred_abnormal):
        if flag:
            feats.append(
                {
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": [f.lng, f.lat]},
                    "properties": {"role": "predicted", "node_id": f.node_id},
                }
            )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"type": "FeatureCollection", "features": feats}, fh,
                  indent=2, sort_keys=True)


def _write_artifacts(
    out_dir, cfg, cfg_hash, trips, truth, result, history, st, gate_counts,
    seeds, model, ingest_report,
) -> None:
    from .synth import export as synth_export

    os.makedirs(out_dir, exist_ok=True)
    join = lambda name: os.path.join(out_dir, name)

    if ingest_report is None:
        ingest_report = IngestReport(
            rows_read=sum(len(t) for t in trips), rows_dropped=0, trips=len(trips)
        )
    with open(join("01_ingest.json"), "w", encoding="utf-8") as fh:
        fh.write(ingest_report.to_json())
    if truth is not None:
        synth_export(trips, truth, out_dir)   # 01_trips side files for chaining

    write_stops_csv(result.stops, join("02_stops.csv"))
    write_segments_json(result.segments, join("03_segments.json"))

    raw_features: list[NodeFeature] = []
    # the raw (pre-smoothing) table is reconstructed for the dump
    for trip in trips:
        raw_features.extend(
            features_for_trip(
                trip, result.segments[trip.id], result.stops[trip.id],
                cfg.indicators, start_node_id=len(raw_features),
            )
        )
    write_features_csv(raw_features, join("04_indicators.csv"))
    write_features_csv(result.features, join("05_smoothed.csv"))
    write_graph_json(result.graph, join("06_graph.json"))

    with open(join("07_propagation.csv"), "w", encoding="utf-8") as fh:
        fh.write("node_id,p_abnormal,provenance\n")
        for i in range(result.state.F.shape[0]):
            fh.write(
                f"{i},{result.state.F[i, prop_mod.ABNORMAL]!r},"
                f"{result.state.provenance[i]}\n"
            )

    label_counts = {
        "seeds_abnormal": int(sum(1 for n, c in seeds.items() if c == prop_mod.ABNORMAL)),
        "seeds_normal": int(sum(1 for n, c in seeds.items() if c == prop_mod.NORMAL)),
        "pseudo_abnormal": gate_counts["new_abnormal"],
        "pseudo_normal": gate_counts["new_normal"],
        "unlabeled": int((result.state.labels < 0).sum()),
        "seed_nodes": sorted(int(n) for n in seeds),
        "labels": [int(v) for v in result.state.labels],
    }
    with open(join("08_pseudo_labels.json"), "w", encoding="utf-8") as fh:
        json.dump(label_counts, fh, indent=2, sort_keys=True)

    with open(join("09_train_history.csv"), "w", encoding="utf-8") as fh:
        fh.write("epoch,l_sup,l_sparsity,l_temporal,total\n")
        for row in history:
            fh.write(
                f"{int(row['epoch'])},{row['l_sup']!r},{row['l_sparsity']!r},"
                f"{row['l_temporal']!r},{row['total']!r}\n"
            )

    st_payload = {
        "rounds": st.history,
        "p_abnormal_before": result.probs_before[:, prop_mod.ABNORMAL].tolist(),
        "p_abnormal_after": result.probs_after[:, prop_mod.ABNORMAL].tolist(),
        "seed_nodes": sorted(int(n) for n in seeds),
    }
    with open(join("10_self_train.json"), "w", encoding="utf-8") as fh:
        json.dump(st_payload, fh, indent=2, sort_keys=True)

    with open(join("11_eval_report.json"), "w", encoding="utf-8") as fh:
        fh.write(result.report.to_json())

    gcn_mod.save_model(model, join("model.json"))
    pred_after = result.probs_after[:, prop_mod.ABNORMAL] > 0.5
    write_geojson_overlay(truth, result.features, pred_after, join("overlay.geojson"))
    with open(join("effective_config.json"), "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
    with open(join("manifest.json"), "w", encoding="utf-8") as fh:
        json.dump({"config_hash": cfg_hash, "complete": True}, fh,
                  indent=2, sort_keys=True)
