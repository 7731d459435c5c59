"""K-Means discretisation of GPS space into zones."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels

METRICS = {"euclidean": kernels.EUCLIDEAN, "haversine": kernels.HAVERSINE}


def haversine_km(a, b) -> float:
    """Great-circle distance in km between two (lat, lon) points in degrees."""
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = (math.sin((lat2 - lat1) / 2.0) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2.0) ** 2)
    return 2.0 * kernels.EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def _distance(a, b, metric: str) -> float:
    if metric == "haversine":
        return haversine_km(a, b)
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass(frozen=True)
class ZoneModel:
    centroids: np.ndarray
    inertia: float
    metric: str = "euclidean"
    labels: np.ndarray | None = field(default=None, compare=False, repr=False)
    inertia_history: tuple[float, ...] = field(default=(), compare=False, repr=False)
    n_iter: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.centroids.ndim != 2 or self.centroids.shape[1] != 2:
            raise ValueError("centroids must be k x 2")
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("centroids must be finite")

    @property
    def k(self) -> int:
        return len(self.centroids)

    def assign(self, point) -> int:
        return int(self.assign_many(np.asarray(point, dtype=float)[None])[0])

    def assign_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.ascontiguousarray(points, dtype=np.float64)
        labels, _ = kernels.nearest_centroid(pts, self.centroids, METRICS[self.metric])
        return labels

    def to_json(self) -> dict:
        return {"k": self.k, "metric": self.metric, "inertia": self.inertia,
                "centroids": self.centroids.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "ZoneModel":
        cents = np.array(doc["centroids"], dtype=np.float64).reshape(-1, 2)
        if len(cents) != doc["k"]:
            raise ValueError("centroid count does not match k")
        return cls(cents, float(doc.get("inertia", 0.0)), doc["metric"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ZoneModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def _kmeanspp(points, k, rng, metric_code):
    n = len(points)
    centers = np.empty((k, 2))
    centers[0] = points[rng.integers(n)]
    _, d2 = kernels.nearest_centroid(points, centers[:1], metric_code)
    for c in range(1, k):
        total = d2.sum()
        # duplicates of chosen centers carry zero weight, so picks stay distinct
        idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
        idx = min(idx, n - 1)
        while d2[idx] == 0.0:
            idx -= 1
        centers[c] = points[idx]
        _, nd2 = kernels.nearest_centroid(points, centers[c:c + 1], metric_code)
        d2 = np.minimum(d2, nd2)
    return centers


def kmeans_fit(points, k: int, seed: int = 0, max_iter: int = 300,
               metric: str = "euclidean") -> ZoneModel:
    """Seeded k-means++ followed by Lloyd iterations.

    Stops once assignments no longer change or after ``max_iter`` rounds.
    An empty cluster is re-seeded with the point farthest from its current
    centroid. Centroids are coordinate means, which minimise inertia exactly
    for the euclidean metric and approximately for haversine.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
        raise ValueError("points must be a non-empty n x 2 array")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    n_distinct = len(np.unique(pts, axis=0))
    if not 1 <= k <= n_distinct:
        raise ValueError(f"k={k} must lie in [1, {n_distinct}] (distinct points)")
    code = METRICS[metric]
    rng = np.random.default_rng(seed)

    centers = _kmeanspp(pts, k, rng, code)
    labels, d2 = kernels.nearest_centroid(pts, centers, code)
    history = [float(d2.sum())]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        sizes = np.bincount(labels, minlength=k)
        new = np.empty_like(centers)
        for axis in range(2):
            new[:, axis] = np.bincount(labels, weights=pts[:, axis], minlength=k)
        nonempty = sizes > 0
        new[nonempty] /= sizes[nonempty, None]
        for c in np.flatnonzero(~nonempty):
            far = int(np.argmax(d2))
            new[c] = pts[far]
            d2[far] = 0.0
        centers = new
        new_labels, d2 = kernels.nearest_centroid(pts, centers, code)
        history.append(float(d2.sum()))
        if np.array_equal(new_labels, labels) and nonempty.all():
            labels = new_labels
            break
        labels = new_labels

    return ZoneModel(centers, history[-1], metric, labels=labels,
                     inertia_history=tuple(history), n_iter=n_iter)


def centroid_distance_matrix(model: ZoneModel) -> np.ndarray:
    k = model.k
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = _distance(model.centroids[i], model.centroids[j], model.metric)
    return out
