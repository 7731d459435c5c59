"""Trajectory-induced directed zone graph."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .zoning import ZoneModel, centroid_distance_matrix

DEFAULT_EPSILON = 1e-9


@dataclass(frozen=True)
class TransitionCounts:
    counts: np.ndarray

    def __post_init__(self):
        if np.any(self.counts < 0) or np.any(np.diag(self.counts) != 0):
            raise ValueError("counts must be non-negative with a zero diagonal")

    @property
    def n(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class AdjacencyMatrix:
    weights: np.ndarray
    epsilon: float = DEFAULT_EPSILON
    tau: float = 0.0

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def row_sums(self) -> np.ndarray:
        return self.weights.sum(axis=1)


def count_transitions(traj, zones: ZoneModel) -> TransitionCounts:
    """Count zone changes between consecutive fixes of the same truck."""
    cols = traj.columns
    labels = zones.assign_many(traj.points())
    return TransitionCounts(kernels.count_transitions(labels, cols["starts"], zones.k))


def normalize(counts: TransitionCounts, epsilon: float = DEFAULT_EPSILON) -> AdjacencyMatrix:
    """A_ij = C_ij / (sum_k C_ik + epsilon). All-zero rows stay zero."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    c = counts.counts.astype(np.float64)
    return AdjacencyMatrix(c / (c.sum(axis=1, keepdims=True) + epsilon), epsilon, 0.0)


def prune(adj: AdjacencyMatrix, tau: float) -> AdjacencyMatrix:
    """Zero every weight strictly below ``tau``; survivors are not renormalised."""
    # tau = 1 is admitted: every weight is < 1, so it prunes the whole graph
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    w = np.where(adj.weights < tau, 0.0, adj.weights)
    return AdjacencyMatrix(w, adj.epsilon, max(tau, adj.tau))


@dataclass(frozen=True)
class Edge:
    u: int
    v: int
    dist: float
    a_weight: float


@dataclass(frozen=True)
class LogisticsGraph:
    """Zone nodes with centroid coordinates and directed weighted edges.

    ``edges`` is sorted by (u, v).
    """

    coords: np.ndarray
    edges: tuple[Edge, ...]
    metric: str = "euclidean"

    def __post_init__(self):
        n = len(self.coords)
        for e in self.edges:
            if not (0 <= e.u < n and 0 <= e.v < n) or e.u == e.v:
                raise ValueError(f"invalid edge {e.u}->{e.v}")
            if not e.dist > 0:
                raise ValueError(f"edge {e.u}->{e.v} has non-positive distance {e.dist}")

    @property
    def num_nodes(self) -> int:
        return len(self.coords)

    def out_edges(self) -> list[list[Edge]]:
        adj: list[list[Edge]] = [[] for _ in range(self.num_nodes)]
        for e in self.edges:
            adj[e.u].append(e)
        return adj

    def edge_map(self) -> dict[tuple[int, int], Edge]:
        return {(e.u, e.v): e for e in self.edges}

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        for e in self.edges:
            a[e.u, e.v] = e.a_weight
        return a

    def to_json(self) -> dict:
        return {
            "metric": self.metric,
            "nodes": [{"id": i, "lat": float(c[0]), "lon": float(c[1])}
                      for i, c in enumerate(self.coords)],
            "edges": [{"u": e.u, "v": e.v, "dist": e.dist, "a_weight": e.a_weight}
                      for e in self.edges],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LogisticsGraph":
        nodes = sorted(doc["nodes"], key=lambda n: n["id"])
        if [n["id"] for n in nodes] != list(range(len(nodes))):
            raise ValueError("node ids must be 0..N-1")
        coords = np.array([[n["lat"], n["lon"]] for n in nodes], dtype=np.float64).reshape(-1, 2)
        edges = tuple(sorted(
            (Edge(int(e["u"]), int(e["v"]), float(e["dist"]), float(e.get("a_weight", 1.0)))
             for e in doc["edges"]),
            key=lambda e: (e.u, e.v)))
        return cls(coords, edges, doc.get("metric", "euclidean"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "LogisticsGraph":
        return cls.from_json(json.loads(Path(path).read_text()))


def build_graph(adj: AdjacencyMatrix, zones: ZoneModel) -> LogisticsGraph:
    if adj.n != zones.k:
        raise ValueError(f"adjacency has {adj.n} nodes but the zone model has {zones.k}")
    dist = centroid_distance_matrix(zones)
    us, vs = np.nonzero(adj.weights)
    edges = tuple(Edge(int(u), int(v), float(dist[u, v]), float(adj.weights[u, v]))
                  for u, v in zip(us, vs))
    return LogisticsGraph(zones.centroids.copy(), edges, zones.metric)
