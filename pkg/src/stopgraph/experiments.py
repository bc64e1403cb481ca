"""Ablation and label-sensitivity harnesses over the full pipeline."""

from __future__ import annotations

from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from .metrics import EvalReport
from .pipeline import PipelineConfig, run_pipeline
from .synth import GroundTruth
from .geo import Trip


def run_ablation(
    trips: list[Trip],
    truth: GroundTruth,
    variant: str,
    cfg: PipelineConfig,
    out_dir: Optional[str] = None,
) -> EvalReport:
    """Run the pipeline with one variant switch flipped.

    Seeds, ground truth and every other config field stay identical, so
    reports across variants are directly comparable (paired by seed).
    """
    result = run_pipeline(trips, truth, replace(cfg, variant=variant), out_dir=out_dir)
    return result.report


def ablation_suite(
    trips: list[Trip],
    truth: GroundTruth,
    variants: Sequence[str],
    cfg: PipelineConfig,
) -> dict[str, EvalReport]:
    return {v: run_ablation(trips, truth, v, cfg) for v in variants}


def _population_std(values: list[float]) -> float:
    return float(np.std(np.asarray(values, dtype=float)))


def label_sensitivity(
    trips: list[Trip],
    truth: GroundTruth,
    k_values: Sequence[int],
    trials: int,
    seed: int,
    cfg: PipelineConfig,
) -> list[dict]:
    """Vary the number of abnormal seed labels and summarize per k.

    Each trial reruns the pipeline with k freshly sampled abnormal
    seeds (normal seed count stays at the configured default). Means
    and population stds are reported over the trials.
    """
    n_abnormal_available = len(
        {(t, i) for t, i in truth.abnormal_samples}
    )
    for k in k_values:
        if k < 1 or k > n_abnormal_available:
            raise ValueError(
                f"k={k} exceeds available abnormal ground-truth stops "
                f"({n_abnormal_available})"
            )

    summaries = []
    for ki, k in enumerate(k_values):
        reports: list[EvalReport] = []
        for trial in range(trials):
            trial_seed = int(
                np.random.SeedSequence(seed, spawn_key=(ki, trial)).generate_state(1)[0]
            )
            trial_cfg = replace(cfg, seed=trial_seed, n_abnormal_seeds=k)
            reports.append(run_pipeline(trips, truth, trial_cfg).report)

        aucs = [r.auc for r in reports if r.auc is not None]
        aps = [r.ap for r in reports if r.ap is not None]
        summaries.append(
            {
                "k": k,
                "trials": trials,
                "auc_mean": float(np.mean(aucs)) if aucs else None,
                "auc_std": _population_std(aucs) if aucs else None,
                "ap_mean": float(np.mean(aps)) if aps else None,
                "ap_std": _population_std(aps) if aps else None,
                "abnormal_nodes_mean": float(
                    np.mean([r.abnormal_nodes for r in reports])
                ),
                "abnormal_segments_mean": float(
                    np.mean([r.abnormal_segments for r in reports])
                ),
                "mean_dist_mean": float(
                    np.mean([r.mean_dist for r in reports if r.mean_dist == r.mean_dist])
                ),
                "median_dist_mean": float(
                    np.mean(
                        [r.median_dist for r in reports if r.median_dist == r.median_dist]
                    )
                ),
            }
        )
    return summaries
