"""Label propagation over the affinity matrix, plus the pseudo-label gate.

Seed labels are clamped while every other row of the soft-label matrix
is repeatedly replaced by the degree-normalized average of its
neighbors. The iteration is the standard minimizer of the quadratic
consistency energy with boundary conditions; the energy is checked to
be non-increasing at every step. A gate then promotes non-seed nodes
whose class probability clears a strict threshold, capped per class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ABNORMAL = 0
NORMAL = 1

SEED = "seed"
PROPAGATED = "propagated"
PSEUDO = "pseudo"
UNLABELED = "unlabeled"


@dataclass
class GateConfig:
    tau_abnormal: float = 0.995
    tau_normal: float = 0.995
    max_new_abnormal: int = 5
    max_new_normal: int = 200

    def __post_init__(self) -> None:
        for tau in (self.tau_abnormal, self.tau_normal):
            if not 0.5 < tau <= 1.0:
                raise ValueError("gate thresholds must lie in (0.5, 1]")
        if self.max_new_abnormal < 0 or self.max_new_normal < 0:
            raise ValueError("per-class caps must be >= 0")


@dataclass
class PropagationConfig:
    max_iters: int = 1000
    tol: float = 1e-6


@dataclass
class LabelState:
    """Soft labels, hard labels and provenance for every node.

    ``F`` is row-stochastic with columns (abnormal, normal). ``labels``
    holds hard classes for seed and pseudo-labeled nodes, -1 elsewhere.
    """

    F: np.ndarray
    provenance: list[str]
    seed_mask: np.ndarray
    labels: np.ndarray
    energy_history: list[float] = field(default_factory=list)
    iterations: int = 0


def propagation_energy(affinity: np.ndarray, F: np.ndarray) -> float:
    """Quadratic consistency energy of soft labels over the affinity
    support: sum over ordered pairs of w_ij * ||F_i - F_j||^2."""
    deg = affinity.sum(axis=1)
    lap_f = deg[:, None] * F - affinity @ F
    return float(2.0 * np.sum(F * lap_f))


def propagate(
    affinity: np.ndarray,
    seeds: dict[int, int],
    max_iters: int = 1000,
    tol: float = 1e-6,
) -> LabelState:
    """Clamped harmonic iteration of the soft-label matrix.

    Args:
        affinity: symmetric non-negative matrix; zero rows are isolated
            nodes that keep the uniform distribution.
        seeds: node index -> class (0 abnormal, 1 normal); clamped.
        max_iters, tol: stop when the largest entry change drops below
            ``tol`` or after ``max_iters`` sweeps.

    Raises:
        ValueError: no seeds, or an asymmetric/negative affinity.
        RuntimeError: the consistency energy increased (should be
            impossible; indicates a broken affinity).
    """
    n = affinity.shape[0]
    if affinity.shape != (n, n):
        raise ValueError("affinity must be square")
    if not seeds:
        raise ValueError("at least one seed label is required")
    if (affinity < 0).any() or not np.allclose(affinity, affinity.T):
        raise ValueError("affinity must be symmetric and non-negative")

    F = np.full((n, 2), 0.5, dtype=float)
    seed_mask = np.zeros(n, dtype=bool)
    labels = np.full(n, -1, dtype=int)
    for idx, cls in seeds.items():
        if cls not in (ABNORMAL, NORMAL):
            raise ValueError(f"seed class must be 0 or 1, got {cls}")
        F[idx] = 0.0
        F[idx, cls] = 1.0
        seed_mask[idx] = True
        labels[idx] = cls

    deg = affinity.sum(axis=1)
    reachable = deg > 0
    energy = propagation_energy(affinity, F)
    history = [energy]
    iterations = 0

    for iterations in range(1, max_iters + 1):
        new_f = F.copy()
        new_f[reachable] = (affinity @ F)[reachable] / deg[reachable, None]
        new_f[seed_mask] = F[seed_mask]

        drift = np.abs(new_f.sum(axis=1) - 1.0).max()
        if drift >= 1e-9:
            raise RuntimeError(f"row-stochasticity drift {drift:g} exceeds 1e-9")
        new_f /= new_f.sum(axis=1, keepdims=True)

        new_energy = propagation_energy(affinity, new_f)
        if new_energy > energy + 1e-9 * max(1.0, abs(energy)):
            raise RuntimeError(
                f"consistency energy increased: {energy!r} -> {new_energy!r}"
            )
        history.append(new_energy)

        delta = float(np.abs(new_f - F).max())
        F = new_f
        energy = new_energy
        if delta < tol:
            break

    provenance = []
    for i in range(n):
        if seed_mask[i]:
            provenance.append(SEED)
        elif abs(F[i, 0] - 0.5) > 1e-12:
            provenance.append(PROPAGATED)
        else:
            provenance.append(UNLABELED)

    return LabelState(
        F=F,
        provenance=provenance,
        seed_mask=seed_mask,
        labels=labels,
        energy_history=history,
        iterations=iterations,
    )


def gate_pseudo_labels(
    state: LabelState, cfg: GateConfig
) -> tuple[LabelState, dict[str, int]]:
    """Promote confident non-seed nodes to pseudo-labels.

    Candidates need class probability at or above the class threshold;
    acceptance is capped per class, preferring higher probability and
    breaking ties on lower node index. Seeds are never touched.
    """
    n = state.F.shape[0]
    accepted = {"new_abnormal": 0, "new_normal": 0}

    for cls, tau, cap, key in (
        (ABNORMAL, cfg.tau_abnormal, cfg.max_new_abnormal, "new_abnormal"),
        (NORMAL, cfg.tau_normal, cfg.max_new_normal, "new_normal"),
    ):
        cands = [
            (-(state.F[i, cls]), i)
            for i in range(n)
            if not state.seed_mask[i]
            and state.labels[i] == -1
            and state.F[i, cls] >= tau
        ]
        cands.sort()
        for _, i in cands[:cap]:
            state.labels[i] = cls
            state.provenance[i] = PSEUDO
            accepted[key] += 1

    return state, accepted
