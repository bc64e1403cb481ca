"""Within-segment indicator smoothing.

Indicator vectors of one segment are standardized, each is replaced by
a kernel-weighted average of its most similar neighbors (Gaussian of
cosine distance), and the result is mapped back to the original scale.
Smoothing only applies to segments whose confidence falls below a
threshold; confident segments keep their raw indicators.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .indicators import NodeFeature

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LtigaParams:
    sigma: float = 0.5      # kernel bandwidth
    k: int = 5              # neighbors averaged per point
    eps: float = 1e-6       # numeric floor for standardization
    tau_c: float = 0.5      # smooth segments with confidence below this
    rescale: bool = True    # map smoothed vectors back to original scale

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class ScaleStats:
    """Per-dimension mean and floored population std of a segment's
    vectors. The stored std already includes the numeric floor, so
    ``restore_scale`` is the exact inverse of ``standardize``."""

    mu: tuple[float, ...]
    sigma: tuple[float, ...]


def standardize(vectors, eps: float = 1e-6) -> tuple[np.ndarray, ScaleStats]:
    """Per-dimension z-scores using population std plus a small floor."""
    x = np.asarray(vectors, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("need at least one vector")
    mu = x.mean(axis=0)
    sig = x.std(axis=0) + eps
    z = (x - mu) / sig
    return z, ScaleStats(mu=tuple(mu.tolist()), sigma=tuple(sig.tolist()))


def kernel_similarity(a, b, sigma: float) -> float:
    """Gaussian kernel of cosine distance: exp(-(1 - cos)^2 / (2 sigma^2)).

    Zero-norm vectors have no direction; two zero vectors count as
    identical, a single zero vector as orthogonal.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 and nb == 0.0:
        cos = 1.0
    elif na == 0.0 or nb == 0.0:
        cos = 0.0
    else:
        cos = float(np.dot(a, b) / (na * nb))
        cos = min(1.0, max(-1.0, cos))
    return float(np.exp(-((1.0 - cos) ** 2) / (2.0 * sigma * sigma)))


def _kernel_matrix(z: np.ndarray, sigma: float) -> np.ndarray:
    norms = np.linalg.norm(z, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = z / safe[:, None]
    cos = np.clip(unit @ unit.T, -1.0, 1.0)
    zero = norms == 0.0
    if zero.any():
        cos[zero, :] = 0.0
        cos[:, zero] = 0.0
        both = np.outer(zero, zero)
        cos[both] = 1.0
        logger.debug("kernel matrix: %d zero-norm vectors", int(zero.sum()))
    return np.exp(-((1.0 - cos) ** 2) / (2.0 * sigma * sigma))


def smooth(vectors, params: LtigaParams) -> np.ndarray:
    """Replace each standardized vector by the kernel-weighted average of
    its top-k most similar other vectors; singletons pass through."""
    z = np.asarray(vectors, dtype=float)
    n = z.shape[0]
    if n < 1:
        raise ValueError("need at least one vector")
    if n == 1:
        return z.copy()
    w = _kernel_matrix(z, params.sigma)
    out = np.empty_like(z)
    for i in range(n):
        others = [j for j in range(n) if j != i]
        others.sort(key=lambda j: (-w[i, j], j))
        nbrs = others[: params.k]
        weights = w[i, nbrs]
        out[i] = weights @ z[nbrs] / weights.sum()
    return out


def restore_scale(smoothed, stats: ScaleStats) -> np.ndarray:
    """Undo standardization: multiply by the stored std, add the mean."""
    z = np.asarray(smoothed, dtype=float)
    return z * np.asarray(stats.sigma) + np.asarray(stats.mu)


def apply_ltiga(features: list[NodeFeature], params: LtigaParams) -> list[NodeFeature]:
    """Smooth indicator vectors of low-confidence segments.

    Segments whose confidence is at or above ``tau_c`` keep their raw
    indicators. Node ids and ordering are preserved. With
    ``rescale=False`` smoothed segments stay in standardized form.
    """
    by_segment: dict[str, list[int]] = {}
    for idx, feat in enumerate(features):
        by_segment.setdefault(feat.segment_id, []).append(idx)

    out = list(features)
    for seg_id, idxs in by_segment.items():
        conf = features[idxs[0]].confidence
        if conf >= params.tau_c:
            continue
        vectors = np.array([features[i].vector() for i in idxs])
        z, stats = standardize(vectors, params.eps)
        smoothed = smooth(z, params)
        if params.rescale:
            smoothed = restore_scale(smoothed, stats)
        for row, i in enumerate(idxs):
            t, m, a = (float(v) for v in smoothed[row])
            out[i] = replace(features[i], tis=t, msd=m, tta_k=a)
    return out
