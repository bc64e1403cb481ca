"""Global spatial-temporal graph over stop nodes.

Nodes carry confidence-weighted indicator vectors. Temporal edges chain
consecutive stops of one segment; similarity edges connect nodes whose
times fall within a window, weighted by the cosine of their weighted
features and pruned to each node's strongest neighbors. An RBF kernel
over the weighted features supplies the affinity matrix used by label
propagation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .indicators import NodeFeature

INTRA = "intra"
INTER = "inter"


@dataclass(frozen=True)
class GraphNode:
    node_id: int
    segment_id: str
    trip_id: str
    point_index: int
    time: float
    lng: float
    lat: float
    feature: tuple[float, float, float]   # confidence-weighted indicators


@dataclass(frozen=True)
class GraphEdge:
    i: int          # node list indices, i < j
    j: int
    weight: float   # cosine similarity for inter edges, 1.0 for intra
    kind: str


@dataclass(frozen=True)
class GraphParams:
    dt_max: float = 600.0      # seconds, similarity-edge time window
    inter_knn_cap: int = 10    # strongest similarity neighbors kept per node
    min_sim: float = 0.2       # similarity floor for inter edges
    sigma_rbf: float = 1.0     # affinity kernel bandwidth

    def __post_init__(self) -> None:
        if self.dt_max <= 0 or self.inter_knn_cap < 1 or self.sigma_rbf <= 0:
            raise ValueError("dt_max, inter_knn_cap and sigma_rbf must be positive")


@dataclass
class StGraph:
    nodes: list[GraphNode]
    edges: list[GraphEdge]
    skipped_nodes: int = 0
    _neighbors: list[list[int]] | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def feature_matrix(self) -> np.ndarray:
        return np.array([node.feature for node in self.nodes], dtype=float)

    def neighbors(self, i: int) -> list[int]:
        if self._neighbors is None:
            adj: list[list[int]] = [[] for _ in range(self.n)]
            for e in self.edges:
                adj[e.i].append(e.j)
                adj[e.j].append(e.i)
            self._neighbors = [sorted(a) for a in adj]
        return self._neighbors[i]

    def edge_counts(self) -> dict[str, int]:
        counts = {INTRA: 0, INTER: 0}
        for e in self.edges:
            counts[e.kind] += 1
        return counts

    def stats_dict(self) -> dict:
        counts = self.edge_counts()
        return {
            "nodes": self.n,
            "edges": len(self.edges),
            "intra_edges": counts[INTRA],
            "inter_edges": counts[INTER],
            "skipped_nodes": self.skipped_nodes,
        }

    def stats_json(self) -> str:
        return json.dumps(self.stats_dict(), indent=2, sort_keys=True)


def weight_features(features: list[NodeFeature]) -> np.ndarray:
    """Scale each indicator vector by its segment confidence."""
    return np.array(
        [[f.confidence * v for v in f.vector()] for f in features], dtype=float
    )


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def build_graph(features: list[NodeFeature], params: GraphParams) -> StGraph:
    """Assemble the stop graph from node features.

    Temporal (intra) edges link consecutive-in-time stops of the same
    segment with weight 1. Similarity (inter) edges are considered for
    every remaining node pair within ``dt_max`` seconds; pairs keep an
    edge when the cosine of their weighted features reaches ``min_sim``
    and one of the endpoints ranks the other among its
    ``inter_knn_cap`` strongest candidates. Nodes whose weighted
    feature has zero norm cannot express similarity and are excluded
    from inter edges ("skipped"); they keep their intra edges.
    """
    weighted = weight_features(features)
    nodes = [
        GraphNode(
            node_id=f.node_id,
            segment_id=f.segment_id,
            trip_id=f.trip_id,
            point_index=f.point_index,
            time=f.t,
            lng=f.lng,
            lat=f.lat,
            feature=tuple(float(v) for v in weighted[idx]),
        )
        for idx, f in enumerate(features)
    ]

    edges: list[GraphEdge] = []
    linked: set[tuple[int, int]] = set()

    by_segment: dict[str, list[int]] = {}
    for idx, node in enumerate(nodes):
        by_segment.setdefault(node.segment_id, []).append(idx)
    for seg_idxs in by_segment.values():
        ordered = sorted(seg_idxs, key=lambda i: (nodes[i].time, i))
        for a, b in zip(ordered, ordered[1:]):
            i, j = min(a, b), max(a, b)
            edges.append(GraphEdge(i=i, j=j, weight=1.0, kind=INTRA))
            linked.add((i, j))

    norms = np.linalg.norm(weighted, axis=1)
    skipped = int((norms == 0.0).sum())

    # candidate similarity edges inside the time window
    order = sorted(range(len(nodes)), key=lambda i: (nodes[i].time, i))
    candidates: dict[int, list[tuple[float, int]]] = {i: [] for i in range(len(nodes))}
    pair_sim: dict[tuple[int, int], float] = {}
    lo = 0
    for pos, i in enumerate(order):
        while nodes[i].time - nodes[order[lo]].time > params.dt_max:
            lo += 1
        for pos_j in range(lo, pos):
            j = order[pos_j]
            a, b = min(i, j), max(i, j)
            if (a, b) in linked:
                continue
            if norms[a] == 0.0 or norms[b] == 0.0:
                continue
            sim = _cosine(weighted[a], weighted[b])
            if sim <= 0.0 or sim < params.min_sim:
                continue
            pair_sim[(a, b)] = sim
            candidates[a].append((sim, b))
            candidates[b].append((sim, a))

    kept: set[tuple[int, int]] = set()
    for i, cands in candidates.items():
        cands.sort(key=lambda t: (-t[0], t[1]))
        for sim, j in cands[: params.inter_knn_cap]:
            kept.add((min(i, j), max(i, j)))

    for a, b in sorted(kept):
        edges.append(GraphEdge(i=a, j=b, weight=pair_sim[(a, b)], kind=INTER))

    return StGraph(nodes=nodes, edges=edges, skipped_nodes=skipped)


def rbf_affinity(graph: StGraph, sigma_rbf: float) -> np.ndarray:
    """RBF kernel over weighted features, restricted to graph edges.

    Symmetric, zero off the edge support; every present entry lies in
    (0, 1].
    """
    if sigma_rbf <= 0:
        raise ValueError("sigma_rbf must be > 0")
    x = graph.feature_matrix()
    w = np.zeros((graph.n, graph.n), dtype=float)
    denom = 2.0 * sigma_rbf * sigma_rbf
    for e in graph.edges:
        diff = x[e.i] - x[e.j]
        val = float(np.exp(-float(diff @ diff) / denom))
        w[e.i, e.j] = val
        w[e.j, e.i] = val
    return w


def adjacency_matrix(graph: StGraph, self_loops: bool = False) -> np.ndarray:
    """Binary adjacency over graph edges, optionally with self-loops."""
    a = np.zeros((graph.n, graph.n), dtype=float)
    for e in graph.edges:
        a[e.i, e.j] = 1.0
        a[e.j, e.i] = 1.0
    if self_loops:
        a += np.eye(graph.n)
    return a


def intra_successors(graph: StGraph) -> dict[int, int]:
    """Map each node index to its temporal successor along intra chains."""
    succ: dict[int, int] = {}
    for e in graph.edges:
        if e.kind != INTRA:
            continue
        a, b = e.i, e.j
        if graph.nodes[a].time <= graph.nodes[b].time:
            succ[a] = b
        else:
            succ[b] = a
    return succ


def export_edge_list(graph: StGraph, path: str) -> None:
    """Write edges as delimited text: i, j, kind, weight."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("i,j,kind,weight\n")
        for e in graph.edges:
            fh.write(f"{e.i},{e.j},{e.kind},{e.weight!r}\n")
