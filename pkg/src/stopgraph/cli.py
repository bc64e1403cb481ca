"""Command-line interface: the full pipeline plus one subcommand per stage.

Stage subcommands operate on a run directory, consuming the previous
stage's artifact and emitting their own; a missing upstream artifact is
an explicit dependency error. ``run`` executes everything end to end,
``ablate`` and ``sensitivity`` drive the experiment harnesses.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import shutil
import sys
from typing import Optional

import numpy as np

from . import gcn as gcn_mod
from . import propagation as prop_mod
from .experiments import label_sensitivity, run_ablation
from .geo import IngestReport, Trip, load_trips
from .graph import build_graph, rbf_affinity
from .indicators import features_for_trip
from .pipeline import (
    PipelineConfig,
    apply_overrides,
    build_report,
    config_from_dict,
    config_to_dict,
    load_graph_json,
    parse_seed_labels,
    read_features_csv,
    read_segments_json,
    read_stops_csv,
    resolve_seed_selectors,
    run_pipeline,
    sample_seeds,
    write_features_csv,
    write_geojson_overlay,
    write_graph_json,
    write_segments_json,
    write_stops_csv,
    _segment_trips,
)
from .smoothing import apply_ltiga
from .stops import detect_stops, resolve_route_stay
from .synth import (
    GroundTruth,
    default_corpus_config,
    export as synth_export,
    generate,
    load_ground_truth,
    synth_config_from_dict,
    write_trips_csv,
)

logger = logging.getLogger("stopgraph")


class DependencyError(RuntimeError):
    """An upstream stage artifact is missing."""


def _require(run_dir: str, name: str, produced_by: str) -> str:
    path = os.path.join(run_dir, name)
    if not os.path.exists(path):
        raise DependencyError(
            f"missing artifact {name} in {run_dir}; run `stopgraph {produced_by}` first"
        )
    return path


def _build_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            cfg = config_from_dict(json.load(fh))
    else:
        cfg = PipelineConfig()
    if getattr(args, "set", None):
        cfg = apply_overrides(cfg, args.set)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if getattr(args, "variant", None):
        cfg = dataclasses.replace(cfg, variant=args.variant)
    return cfg


def _load_input(
    path: str, strict: bool = False
) -> tuple[list[Trip], Optional[GroundTruth], IngestReport]:
    """Trips from a corpus CSV (with optional ground-truth sidecar) or a
    synthetic-corpus JSON config."""
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            synth_cfg = synth_config_from_dict(json.load(fh))
        trips, truth = generate(synth_cfg)
        report = IngestReport(
            rows_read=sum(len(t) for t in trips), rows_dropped=0, trips=len(trips)
        )
        return trips, truth, report
    trips, report = load_trips(path, strict=strict)
    truth = None
    sidecar = os.path.join(os.path.dirname(os.path.abspath(path)), "ground_truth.json")
    if os.path.exists(sidecar):
        truth = load_ground_truth(sidecar)
    return trips, truth, report


def _load_run_trips(run_dir: str) -> list[Trip]:
    path = _require(run_dir, "trips.csv", "ingest")
    trips, _ = load_trips(path)
    return trips


def _run_truth(run_dir: str) -> Optional[GroundTruth]:
    path = os.path.join(run_dir, "ground_truth.json")
    return load_ground_truth(path) if os.path.exists(path) else None


# ---------------------------------------------------------------------------
# subcommand implementations

def cmd_synth(args) -> int:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = synth_config_from_dict(json.load(fh))
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
    else:
        cfg = default_corpus_config(seed=args.seed or 0)
    trips, truth = generate(cfg)
    csv_path, truth_path = synth_export(trips, truth, args.out)
    with open(os.path.join(args.out, "synth_config.json"), "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(cfg), fh, indent=2, sort_keys=True)
    print(f"wrote {csv_path} ({sum(len(t) for t in trips)} samples, "
          f"{len(trips)} trips) and {truth_path}")
    return 0


def cmd_ingest(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    trips, report = load_trips(args.input, strict=args.strict)
    write_trips_csv(trips, os.path.join(args.out, "trips.csv"))
    with open(os.path.join(args.out, "01_ingest.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    sidecar = os.path.join(
        os.path.dirname(os.path.abspath(args.input)), "ground_truth.json"
    )
    if os.path.exists(sidecar):
        shutil.copy(sidecar, os.path.join(args.out, "ground_truth.json"))
    print(report.to_json())
    return 0


def cmd_detect_stops(args) -> int:
    trips = _load_run_trips(args.out)
    cfg = _build_config(args)
    detector = resolve_route_stay(trips, cfg.detector)
    stops = {t.id: detect_stops(t, detector) for t in trips}
    write_stops_csv(stops, os.path.join(args.out, "02_stops.csv"))
    total = sum(len(v) for v in stops.values())
    print(f"detected {total} stop events across {len(trips)} trips "
          f"(route mean stay {detector.s_route:.1f}s)")
    return 0


def cmd_segment(args) -> int:
    trips = _load_run_trips(args.out)
    cfg = _build_config(args)
    segments = _segment_trips(trips, cfg)
    write_segments_json(segments, os.path.join(args.out, "03_segments.json"))
    total = sum(len(v) for v in segments.values())
    print(f"built {total} segments ({cfg.variant})")
    return 0


def cmd_indicators(args) -> int:
    trips = _load_run_trips(args.out)
    stops = read_stops_csv(_require(args.out, "02_stops.csv", "detect-stops"))
    segments = read_segments_json(_require(args.out, "03_segments.json", "segment"))
    cfg = _build_config(args)
    features = []
    for trip in trips:
        features.extend(
            features_for_trip(
                trip, segments[trip.id], stops.get(trip.id, []), cfg.indicators,
                start_node_id=len(features),
            )
        )
    write_features_csv(features, os.path.join(args.out, "04_indicators.csv"))
    print(f"computed indicators for {len(features)} stop nodes")
    return 0


def cmd_ltiga(args) -> int:
    features = read_features_csv(_require(args.out, "04_indicators.csv", "indicators"))
    cfg = _build_config(args)
    if cfg.variant in ("no-ltiga", "gcn-only"):
        smoothed = features
    elif cfg.variant == "no-rescale":
        smoothed = apply_ltiga(features, dataclasses.replace(cfg.ltiga, rescale=False))
    else:
        smoothed = apply_ltiga(features, cfg.ltiga)
    write_features_csv(smoothed, os.path.join(args.out, "05_smoothed.csv"))
    changed = sum(
        1 for a, b in zip(features, smoothed) if a.vector() != b.vector()
    )
    print(f"smoothed {changed} of {len(features)} node vectors")
    return 0


def cmd_graph(args) -> int:
    features = read_features_csv(_require(args.out, "05_smoothed.csv", "ltiga"))
    cfg = _build_config(args)
    graph = build_graph(features, cfg.graph)
    write_graph_json(graph, os.path.join(args.out, "06_graph.json"))
    print(graph.stats_json())
    return 0


def cmd_propagate(args) -> int:
    graph = load_graph_json(_require(args.out, "06_graph.json", "graph"))
    cfg = _build_config(args)
    if args.labels:
        seeds = resolve_seed_selectors(parse_seed_labels(args.labels), graph.nodes)
    else:
        truth = _run_truth(args.out)
        if truth is None:
            raise DependencyError(
                "no --labels file and no ground_truth.json in the run directory"
            )
        gt = np.array(
            [truth.is_abnormal(n.trip_id, n.point_index) for n in graph.nodes]
        )
        seeds = sample_seeds(gt, cfg)
    affinity = rbf_affinity(graph, cfg.graph.sigma_rbf)
    state = prop_mod.propagate(
        affinity, seeds, cfg.propagation.max_iters, cfg.propagation.tol
    )
    state, counts = prop_mod.gate_pseudo_labels(state, cfg.gate)
    with open(os.path.join(args.out, "07_propagation.csv"), "w", encoding="utf-8") as fh:
        fh.write("node_id,p_abnormal,provenance\n")
        for i in range(state.F.shape[0]):
            fh.write(f"{i},{state.F[i, prop_mod.ABNORMAL]!r},{state.provenance[i]}\n")
    payload = {
        "seeds_abnormal": sum(1 for c in seeds.values() if c == prop_mod.ABNORMAL),
        "seeds_normal": sum(1 for c in seeds.values() if c == prop_mod.NORMAL),
        "pseudo_abnormal": counts["new_abnormal"],
        "pseudo_normal": counts["new_normal"],
        "unlabeled": int((state.labels < 0).sum()),
        "seed_nodes": sorted(int(n) for n in seeds),
        "labels": [int(v) for v in state.labels],
    }
    with open(os.path.join(args.out, "08_pseudo_labels.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    print(json.dumps({k: payload[k] for k in
                      ("seeds_abnormal", "seeds_normal", "pseudo_abnormal",
                       "pseudo_normal", "unlabeled")}, indent=2, sort_keys=True))
    return 0


def cmd_train(args) -> int:
    graph = load_graph_json(_require(args.out, "06_graph.json", "graph"))
    with open(_require(args.out, "08_pseudo_labels.json", "propagate"),
              encoding="utf-8") as fh:
        label_payload = json.load(fh)
    labels = np.array(label_payload["labels"], dtype=int)
    cfg = _build_config(args)
    train_seed = int(
        np.random.SeedSequence(cfg.seed, spawn_key=(23,)).generate_state(1)[0]
    )
    train_cfg = dataclasses.replace(cfg.train, seed=train_seed)
    x = graph.feature_matrix()
    model = gcn_mod.init_model(graph, hidden=train_cfg.hidden, seed=train_seed)
    model, history = gcn_mod.train(model, graph, x, labels, train_cfg)
    probs_before = gcn_mod.forward(model, graph, x)
    st = gcn_mod.self_train(model, graph, x, labels, train_cfg)
    with open(os.path.join(args.out, "09_train_history.csv"), "w", encoding="utf-8") as fh:
        fh.write("epoch,l_sup,l_sparsity,l_temporal,total\n")
        for row in history:
            fh.write(f"{int(row['epoch'])},{row['l_sup']!r},{row['l_sparsity']!r},"
                     f"{row['l_temporal']!r},{row['total']!r}\n")
    st_payload = {
        "rounds": st.history,
        "p_abnormal_before": probs_before[:, prop_mod.ABNORMAL].tolist(),
        "p_abnormal_after": st.probs[:, prop_mod.ABNORMAL].tolist(),
        "seed_nodes": label_payload["seed_nodes"],
    }
    with open(os.path.join(args.out, "10_self_train.json"), "w", encoding="utf-8") as fh:
        json.dump(st_payload, fh, indent=2, sort_keys=True)
    gcn_mod.save_model(model, os.path.join(args.out, "model.json"))
    print(f"trained {len(history)} epochs; final loss {history[-1]['total']:.6f}; "
          f"{len(st.history)} self-training rounds")
    return 0


def cmd_evaluate(args) -> int:
    features = read_features_csv(_require(args.out, "05_smoothed.csv", "ltiga"))
    graph = load_graph_json(_require(args.out, "06_graph.json", "graph"))
    with open(_require(args.out, "10_self_train.json", "train"), encoding="utf-8") as fh:
        st_payload = json.load(fh)
    cfg = _build_config(args)
    truth = _run_truth(args.out)
    gt = None
    if truth is not None:
        gt = np.array(
            [truth.is_abnormal(f.trip_id, f.point_index) for f in features]
        )
    seed_mask = np.zeros(len(features), dtype=bool)
    seed_mask[st_payload["seed_nodes"]] = True
    p_before = np.array(st_payload["p_abnormal_before"])
    p_after = np.array(st_payload["p_abnormal_after"])
    probs_before = np.column_stack([p_before, 1.0 - p_before])
    probs_after = np.column_stack([p_after, 1.0 - p_after])
    report = build_report(
        cfg, features, graph, truth, gt, seed_mask, probs_before, probs_after
    )
    with open(os.path.join(args.out, "11_eval_report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    write_geojson_overlay(
        truth, features, p_after > 0.5, os.path.join(args.out, "overlay.geojson")
    )
    print(report.to_json())
    return 0


def cmd_run(args) -> int:
    trips, truth, report = _load_input(args.input, strict=args.strict)
    cfg = _build_config(args)
    seed_labels = parse_seed_labels(args.labels) if args.labels else None
    result = run_pipeline(
        trips, truth, cfg, seed_labels=seed_labels, out_dir=args.out,
        force=args.force, ingest_report=report,
    )
    if result.skipped_rerun:
        print(f"run directory {args.out} is up to date (use --force to rerun)")
    else:
        print(result.report.to_json())
    return 0


def cmd_ablate(args) -> int:
    trips, truth, _ = _load_input(args.input)
    if truth is None:
        raise DependencyError("ablations need a corpus with ground truth")
    cfg = _build_config(args)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    reports = {}
    for variant in variants:
        out_dir = os.path.join(args.out, variant) if args.out else None
        reports[variant] = run_ablation(trips, truth, variant, cfg, out_dir=out_dir)
    header = f"{'variant':<12} {'auc':>8} {'ap':>8} {'abn.nodes':>10} " \
             f"{'segments':>9} {'skipped':>8} {'edges':>7}"
    print(header)
    for variant, rep in reports.items():
        auc_s = f"{rep.auc:.4f}" if rep.auc is not None else "n/a"
        ap_s = f"{rep.ap:.4f}" if rep.ap is not None else "n/a"
        print(f"{variant:<12} {auc_s:>8} {ap_s:>8} {rep.abnormal_nodes:>10} "
              f"{rep.abnormal_segments:>9} {rep.skipped_nodes:>8} {rep.edges:>7}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        payload = {v: r.to_dict() for v, r in reports.items()}
        with open(os.path.join(args.out, "ablation.json"), "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
    return 0


def cmd_sensitivity(args) -> int:
    trips, truth, _ = _load_input(args.input)
    if truth is None:
        raise DependencyError("sensitivity analysis needs a corpus with ground truth")
    cfg = _build_config(args)
    k_values = [int(k) for k in args.k.split(",")]
    summaries = label_sensitivity(
        trips, truth, k_values, args.trials, cfg.seed, cfg
    )
    print(f"{'k':>4} {'auc(mean±std)':>18} {'ap(mean±std)':>18} "
          f"{'abn.nodes':>10} {'segments':>9} {'mean_d':>9} {'med_d':>9}")
    for row in summaries:
        print(
            f"{row['k']:>4} "
            f"{row['auc_mean']:.4f}±{row['auc_std']:.4f}".rjust(19) +
            f" {row['ap_mean']:.4f}±{row['ap_std']:.4f}".rjust(19) +
            f" {row['abnormal_nodes_mean']:>10.1f} {row['abnormal_segments_mean']:>9.1f}"
            f" {row['mean_dist_mean']:>9.1f} {row['median_dist_mean']:>9.1f}"
        )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "sensitivity.json"), "w", encoding="utf-8") as fh:
            json.dump(summaries, fh, indent=2, sort_keys=True)
    return 0


# ---------------------------------------------------------------------------

def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="pipeline config JSON file")
    parser.add_argument("--seed", type=int, default=None, help="master RNG seed")
    parser.add_argument("--variant", choices=["full", "fixed-seg", "no-ltiga",
                                              "no-rescale", "gcn-only"],
                        default=None, help="pipeline variant")
    parser.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a config field, e.g. detector.d_threshold=150")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stopgraph",
        description="Abnormal stop detection for sparse GPS coach trajectories",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the full pipeline")
    p.add_argument("--input", required=True,
                   help="corpus CSV or synthetic-corpus config JSON")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--labels", help="seed-label file")
    p.add_argument("--force", action="store_true",
                   help="rerun even if the run directory is up to date")
    p.add_argument("--strict", action="store_true",
                   help="abort on unparseable input rows")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="synthetic corpus config JSON")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="load and validate a trajectory file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_ingest)

    for name, func, extra_help in [
        ("detect-stops", cmd_detect_stops, "classify stop events"),
        ("segment", cmd_segment, "partition trips into segments"),
        ("indicators", cmd_indicators, "compute stop indicators"),
        ("ltiga", cmd_ltiga, "smooth low-confidence segment indicators"),
        ("graph", cmd_graph, "build the spatial-temporal graph"),
    ]:
        p = sub.add_parser(name, help=extra_help)
        p.add_argument("--out", required=True, help="run directory")
        _add_config_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("propagate", help="propagate seed labels and gate pseudo-labels")
    p.add_argument("--out", required=True)
    p.add_argument("--labels", help="seed-label file")
    _add_config_flags(p)
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("train", help="train the classifier with self-training")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate predictions against ground truth")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run pipeline variants for comparison")
    p.add_argument("--input", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--variants", default="full,fixed-seg,no-ltiga,no-rescale,gcn-only")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sensitivity", help="label-budget sensitivity analysis")
    p.add_argument("--input", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--k", default="5,7,10", help="comma-separated label budgets")
    p.add_argument("--trials", type=int, default=5)
    _add_config_flags(p)
    p.set_defaults(func=cmd_sensitivity)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DependencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
