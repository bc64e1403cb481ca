"""Two-layer graph convolutional classifier with composite loss and
confidence-aware self-training.

The forward pass aggregates neighbor features under symmetric degree
normalization (self-loops added so isolated nodes keep their own
signal) and ends in a softmax over (abnormal, normal). Training
minimizes class-weighted cross-entropy over the labeled nodes plus an
L1 penalty on learnable similarity-edge weights and a squared penalty
on weight differences across temporally adjacent neighbors. All
gradients are computed analytically and verified against finite
differences by ``grad_check``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .graph import INTER, StGraph, adjacency_matrix, intra_successors


@dataclass
class TrainConfig:
    hidden: int = 16
    lr: float = 0.01
    epochs: int = 300
    lambda1: float = 1e-4       # sparsity penalty weight
    lambda2: float = 1e-3       # temporal smoothness penalty weight
    self_train_rounds: int = 3
    tau: float = 0.9            # pseudo-label confidence threshold
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be >= 0")
        if self.tau <= 0.5:
            raise ValueError("tau must exceed 0.5")
        if self.epochs < 1 or self.hidden < 1 or self.self_train_rounds < 0:
            raise ValueError("epochs and hidden must be >= 1, rounds >= 0")


@dataclass
class GcnModel:
    """Layer parameters plus learnable similarity-edge weights.

    ``edge_weights`` aligns with the graph's inter-edge list (intra
    edges stay fixed at 1 and are not parameters).
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    edge_weights: np.ndarray

    def params(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("w1", self.w1),
            ("b1", self.b1),
            ("w2", self.w2),
            ("b2", self.b2),
            ("edge_weights", self.edge_weights),
        ]


def init_model(graph: StGraph, hidden: int = 16, seed: int = 0) -> GcnModel:
    """Deterministic Glorot-uniform init; edge weights start from the
    constructed similarity-edge weights."""
    rng = np.random.default_rng(seed)

    def glorot(fan_in: int, fan_out: int) -> np.ndarray:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    inter_w = np.array(
        [e.weight for e in graph.edges if e.kind == INTER], dtype=float
    )
    return GcnModel(
        w1=glorot(3, hidden),
        b1=np.zeros(hidden),
        w2=glorot(hidden, 2),
        b2=np.zeros(2),
        edge_weights=inter_w,
    )


def normalized_adjacency(graph: StGraph) -> np.ndarray:
    """Self-loop adjacency under symmetric 1/sqrt(deg_i * deg_j) scaling."""
    a = adjacency_matrix(graph, self_loops=True)
    d_inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


def propagate_layer(
    a_hat: np.ndarray, h: np.ndarray, w: np.ndarray, b: np.ndarray, activate: bool = True
) -> np.ndarray:
    """One graph convolution: normalized aggregation, affine map,
    optional rectifier."""
    z = a_hat @ h @ w + b
    return np.maximum(z, 0.0) if activate else z


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_cache(model: GcnModel, a_hat: np.ndarray, x: np.ndarray) -> dict:
    ax = a_hat @ x
    z1 = ax @ model.w1 + model.b1
    h1 = np.maximum(z1, 0.0)
    ah1 = a_hat @ h1
    z2 = ah1 @ model.w2 + model.b2
    return {"ax": ax, "z1": z1, "h1": h1, "ah1": ah1, "z2": z2, "probs": _softmax(z2)}


def forward(model: GcnModel, graph: StGraph, features: np.ndarray) -> np.ndarray:
    """Class probabilities per node; rows sum to 1."""
    x = np.asarray(features, dtype=float)
    if x.shape != (graph.n, model.w1.shape[0]):
        raise ValueError(
            f"feature matrix {x.shape} does not match graph size {graph.n} "
            f"and input dim {model.w1.shape[0]}"
        )
    return _forward_cache(model, normalized_adjacency(graph), x)["probs"]


def _class_weights(labels: np.ndarray) -> np.ndarray:
    """Square-root inverse-frequency per-node weights over the labeled set.

    The sqrt compromise keeps the rare class visible without fully
    normalizing away label-mass growth, so added pseudo-labels still
    shift the decision boundary during self-training.
    """
    labeled = labels >= 0
    n_labeled = int(labeled.sum())
    w = np.zeros(labels.shape[0])
    for cls in (0, 1):
        count = int((labels == cls).sum())
        if count:
            w[labels == cls] = np.sqrt(n_labeled / (2.0 * count))
    return w


def temporal_pairs(graph: StGraph) -> list[tuple[int, int]]:
    """Index pairs of similarity edges that share a node and lead to
    temporally consecutive neighbors along a segment chain."""
    succ = intra_successors(graph)
    edge_idx: dict[tuple[int, int], int] = {}
    neighbors: dict[int, list[int]] = {}
    pos = 0
    for e in graph.edges:
        if e.kind != INTER:
            continue
        edge_idx[(e.i, e.j)] = pos
        neighbors.setdefault(e.i, []).append(e.j)
        neighbors.setdefault(e.j, []).append(e.i)
        pos += 1

    pairs = []
    for i in sorted(neighbors):
        for j in sorted(neighbors[i]):
            j2 = succ.get(j)
            if j2 is None or j2 == i:
                continue
            first = edge_idx[(min(i, j), max(i, j))]
            second = edge_idx.get((min(i, j2), max(i, j2)))
            if second is not None:
                pairs.append((first, second))
    return pairs


def _reg_terms(
    edge_weights: np.ndarray, pairs: list[tuple[int, int]]
) -> tuple[float, float]:
    l_sparsity = float(np.abs(edge_weights).sum())
    l_temporal = 0.0
    for a, b in pairs:
        l_temporal += float((edge_weights[a] - edge_weights[b]) ** 2)
    return l_sparsity, l_temporal


def loss(
    model: GcnModel,
    graph: StGraph,
    probs: np.ndarray,
    labels: np.ndarray,
    lambda1: float,
    lambda2: float,
) -> tuple[float, dict[str, float]]:
    """Composite loss and its per-term breakdown.

    Supervised term: class-weighted mean cross-entropy over labeled
    nodes. Sparsity: L1 norm of the learnable edge weights. Temporal:
    squared differences of edge weights across temporally adjacent
    neighbor pairs.
    """
    labels = np.asarray(labels)
    labeled = labels >= 0
    if not labeled.any():
        raise ValueError("labeled set is empty")
    w = _class_weights(labels)
    p_true = probs[labeled, labels[labeled]]
    ce = -np.log(np.maximum(p_true, 1e-300))
    l_sup = float((w[labeled] * ce).sum() / w[labeled].sum())
    l_sparsity, l_temporal = _reg_terms(model.edge_weights, temporal_pairs(graph))
    total = l_sup + lambda1 * l_sparsity + lambda2 * l_temporal
    return total, {
        "l_sup": l_sup,
        "l_sparsity": l_sparsity,
        "l_temporal": l_temporal,
        "total": total,
    }


def _gradients(
    model: GcnModel,
    a_hat: np.ndarray,
    x: np.ndarray,
    labels: np.ndarray,
    pairs: list[tuple[int, int]],
    lambda1: float,
    lambda2: float,
) -> tuple[dict[str, np.ndarray], dict[str, float]]:
    """Analytic gradients of the composite loss for every parameter."""
    cache = _forward_cache(model, a_hat, x)
    probs = cache["probs"]
    labeled = labels >= 0
    w = _class_weights(labels)
    w_sum = w[labeled].sum()

    p_true = probs[labeled, labels[labeled]]
    ce = -np.log(np.maximum(p_true, 1e-300))
    l_sup = float((w[labeled] * ce).sum() / w_sum)

    g2 = np.zeros_like(probs)
    onehot = np.zeros_like(probs)
    onehot[labeled, labels[labeled]] = 1.0
    g2[labeled] = (probs[labeled] - onehot[labeled]) * (w[labeled] / w_sum)[:, None]

    d_w2 = cache["ah1"].T @ g2
    d_b2 = g2.sum(axis=0)
    gh1 = a_hat @ (g2 @ model.w2.T)          # a_hat is symmetric
    g1 = gh1 * (cache["z1"] > 0)
    d_w1 = cache["ax"].T @ g1
    d_b1 = g1.sum(axis=0)

    d_edge = lambda1 * np.sign(model.edge_weights)
    for a, b in pairs:
        diff = 2.0 * (model.edge_weights[a] - model.edge_weights[b])
        d_edge[a] += lambda2 * diff
        d_edge[b] -= lambda2 * diff

    l_sparsity, l_temporal = _reg_terms(model.edge_weights, pairs)
    terms = {
        "l_sup": l_sup,
        "l_sparsity": l_sparsity,
        "l_temporal": l_temporal,
        "total": l_sup + lambda1 * l_sparsity + lambda2 * l_temporal,
    }
    grads = {"w1": d_w1, "b1": d_b1, "w2": d_w2, "b2": d_b2, "edge_weights": d_edge}
    return grads, terms


def train(
    model: GcnModel,
    graph: StGraph,
    features: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
) -> tuple[GcnModel, list[dict[str, float]]]:
    """Full-batch training with per-parameter adaptive step scaling.

    Deterministic given the model's initial state and config. Aborts
    with a diagnostic if the loss diverges to a non-finite value.
    """
    x = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    if not (labels >= 0).any():
        raise ValueError("labeled set is empty")
    a_hat = normalized_adjacency(graph)
    pairs = temporal_pairs(graph)

    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    m = {name: np.zeros_like(p) for name, p in model.params()}
    v = {name: np.zeros_like(p) for name, p in model.params()}
    history: list[dict[str, float]] = []

    for epoch in range(1, cfg.epochs + 1):
        grads, terms = _gradients(
            model, a_hat, x, labels, pairs, cfg.lambda1, cfg.lambda2
        )
        if not np.isfinite(terms["total"]):
            raise RuntimeError(
                f"training diverged at epoch {epoch}: loss={terms['total']!r}"
            )
        for name, param in model.params():
            g = grads[name]
            m[name] = beta1 * m[name] + (1 - beta1) * g
            v[name] = beta2 * v[name] + (1 - beta2) * g * g
            m_hat = m[name] / (1 - beta1**epoch)
            v_hat = v[name] / (1 - beta2**epoch)
            param -= cfg.lr * m_hat / (np.sqrt(v_hat) + adam_eps)
        history.append({"epoch": float(epoch), **terms})

    return model, history


@dataclass
class SelfTrainResult:
    probs: np.ndarray
    history: list[dict[str, float]]
    labels: np.ndarray


def self_train(
    model: GcnModel,
    graph: StGraph,
    features: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
) -> SelfTrainResult:
    """Iterative pseudo-label expansion and retraining.

    Each round adds unlabeled nodes whose top class probability
    exceeds ``tau`` to the labeled set with their predicted class, then
    retrains. Stops early when no new node qualifies. The labeled set
    only ever grows and existing labels are never overwritten.
    """
    x = np.asarray(features, dtype=float)
    labels = np.asarray(labels).copy()
    history: list[dict[str, float]] = []

    for rnd in range(1, cfg.self_train_rounds + 1):
        probs = forward(model, graph, x)
        conf = probs.max(axis=1)
        candidates = (labels < 0) & (conf > cfg.tau)
        added = int(candidates.sum())
        record = {
            "round": float(rnd),
            "added": float(added),
            "labeled_total": float((labels >= 0).sum() + added),
        }
        if added == 0:
            history.append(record)
            break
        labels[candidates] = probs[candidates].argmax(axis=1)
        model, train_hist = train(model, graph, x, labels, cfg)
        record["final_loss"] = train_hist[-1]["total"]
        history.append(record)

    return SelfTrainResult(probs=forward(model, graph, x), history=history, labels=labels)


def grad_check(
    model: GcnModel,
    graph: StGraph,
    features: np.ndarray,
    labels: np.ndarray,
    lambda1: float = 1e-4,
    lambda2: float = 1e-3,
    step: float = 1e-5,
) -> float:
    """Max relative error of analytic vs central finite-difference
    gradients over every parameter. Intended for small fixtures."""
    x = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    a_hat = normalized_adjacency(graph)
    pairs = temporal_pairs(graph)

    def total_loss() -> float:
        cache = _forward_cache(model, a_hat, x)
        labeled = labels >= 0
        w = _class_weights(labels)
        p_true = cache["probs"][labeled, labels[labeled]]
        ce = -np.log(np.maximum(p_true, 1e-300))
        l_sup = float((w[labeled] * ce).sum() / w[labeled].sum())
        l_sp, l_tmp = _reg_terms(model.edge_weights, pairs)
        return l_sup + lambda1 * l_sp + lambda2 * l_tmp

    grads, _ = _gradients(model, a_hat, x, labels, pairs, lambda1, lambda2)
    worst = 0.0
    for name, param in model.params():
        flat = param.reshape(-1)
        g_flat = grads[name].reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + step
            up = total_loss()
            flat[idx] = original - step
            down = total_loss()
            flat[idx] = original
            numeric = (up - down) / (2.0 * step)
            rel = abs(g_flat[idx] - numeric) / max(1.0, abs(g_flat[idx]), abs(numeric))
            worst = max(worst, rel)
    return worst


def save_model(model: GcnModel, path: str) -> None:
    """JSON checkpoint: dims, weights, biases, edge weights."""
    payload = {
        "dims": [model.w1.shape[0], model.w1.shape[1], model.w2.shape[1]],
        "w1": model.w1.tolist(),
        "b1": model.b1.tolist(),
        "w2": model.w2.tolist(),
        "b2": model.b2.tolist(),
        "edge_weights": model.edge_weights.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def load_model(path: str) -> GcnModel:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return GcnModel(
        w1=np.array(payload["w1"], dtype=float),
        b1=np.array(payload["b1"], dtype=float),
        w2=np.array(payload["w2"], dtype=float),
        b2=np.array(payload["b2"], dtype=float),
        edge_weights=np.array(payload["edge_weights"], dtype=float),
    )
