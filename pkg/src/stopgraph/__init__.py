"""Abnormal stop detection for sparse GPS coach trajectories.

Rule-based stop classification, sparsity-aware segmentation, stop
indicators with confidence-gated smoothing, a spatial-temporal graph,
label propagation, a graph convolutional classifier with self-training,
and the evaluation harness that ties them together.
"""

from .geo import ColumnMap, GpsPoint, IngestReport, Trip, haversine, haversine_ll, load_trips
from .stops import DetectorConfig, StopEvent, StopKind, classify_point, detect_stops, estimate_velocity, route_mean_stay
from .segmentation import SasThresholds, Segment, compute_thresholds, segment_break, segment_fixed, segment_trip
from .indicators import IndicatorParams, NodeFeature, confidence, features_for_trip, msd, tis, tta_k
from .smoothing import LtigaParams, ScaleStats, apply_ltiga, kernel_similarity, restore_scale, smooth, standardize
from .graph import GraphParams, StGraph, build_graph, rbf_affinity, weight_features
from .propagation import GateConfig, LabelState, gate_pseudo_labels, propagate, propagation_energy
from .gcn import GcnModel, TrainConfig, forward, grad_check, init_model, self_train, train
from .metrics import EvalReport, aggregate_segments, auc, average_precision, spatial_match
from .synth import GroundTruth, SynthConfig, default_corpus_config, export, generate
from .pipeline import PipelineConfig, run_pipeline
from .experiments import label_sensitivity, run_ablation

__version__ = "0.1.0"
