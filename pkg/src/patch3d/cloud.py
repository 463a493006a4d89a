"""Point-cloud container, exact spatial queries, and preprocessing ops.

All geometry is double precision; distances are Euclidean. Ties are broken
by lowest point index everywhere so that identical inputs always produce
identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateInput, EmptyInput, InvalidArgument


def _as_points(points) -> np.ndarray:
    arr = np.ascontiguousarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidArgument(f"points must be (n, 3), got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """One object sample: positions plus optional normals and anomaly mask.

    Arrays are validated and frozen at construction; instances are safe to
    share across threads.
    """

    points: np.ndarray
    normals: np.ndarray | None = None
    anomaly_mask: np.ndarray | None = None
    id: str = ""

    def __post_init__(self):
        pts = _as_points(self.points)
        if not np.all(np.isfinite(pts)):
            raise InvalidArgument("points contain NaN/Inf coordinates")
        object.__setattr__(self, "points", pts)

        if self.normals is not None:
            nrm = _as_points(self.normals)
            if len(nrm) != len(pts):
                raise InvalidArgument("normals length differs from points")
            lengths = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(lengths - 1.0) > 1e-6):
                raise InvalidArgument("normals must have unit length (within 1e-6)")
            object.__setattr__(self, "normals", nrm)

        if self.anomaly_mask is not None:
            mask = np.asarray(self.anomaly_mask, dtype=bool)
            if mask.shape != (len(pts),):
                raise InvalidArgument("anomaly_mask length differs from points")
            object.__setattr__(self, "anomaly_mask", mask)

        for arr in (self.points, self.normals, self.anomaly_mask):
            if arr is not None:
                arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.points)

    def with_points(self, points: np.ndarray) -> "PointCloud":
        return PointCloud(points, self.normals, self.anomaly_mask, self.id)

    def with_normals(self, normals: np.ndarray) -> "PointCloud":
        return PointCloud(self.points, normals, self.anomaly_mask, self.id)

    def with_mask(self, mask: np.ndarray) -> "PointCloud":
        return PointCloud(self.points, self.normals, mask, self.id)


@dataclass(frozen=True, eq=False)
class SpatialIndex:
    """Immutable exact k-d tree over one cloud's points."""

    points: np.ndarray
    tree: cKDTree = field(repr=False)

    @classmethod
    def build(cls, cloud: PointCloud | np.ndarray) -> "SpatialIndex":
        pts = cloud.points if isinstance(cloud, PointCloud) else _as_points(cloud)
        if len(pts) == 0:
            raise EmptyInput("cannot index an empty cloud")
        return cls(points=pts, tree=cKDTree(pts))

    def __len__(self) -> int:
        return len(self.points)

    def query_bulk(self, queries: np.ndarray, k: int):
        """Vectorized k-NN without the per-query tie guarantee of ``knn``.

        Deterministic for identical inputs; used on interior paths where
        exact tie ordering is irrelevant (random data has no ties).
        """
        d, i = self.tree.query(queries, k=k, workers=1)
        if k == 1:
            d, i = d[:, None], i[:, None]
        return d, i


def knn(index: SpatialIndex, query, k: int) -> list[tuple[int, float]]:
    """Exact k nearest neighbors of ``query``: (index, distance) ascending.

    Equal distances are ordered by lowest point index.
    """
    n = len(index)
    if not 1 <= k <= n:
        raise InvalidArgument(f"k={k} outside [1, {n}]")
    q = np.asarray(query, dtype=np.float64).reshape(3)
    d, _ = index.tree.query(q, k=k, workers=1)
    dk = float(np.max(d)) if k > 1 else float(d)
    # Inflate the radius by a few ulps so boundary ties are never missed,
    # then re-rank with exactly recomputed distances.
    cand = index.tree.query_ball_point(q, r=dk * (1.0 + 1e-9) + 1e-300)
    cand = np.asarray(sorted(cand), dtype=np.intp)
    dist = np.sqrt(np.sum((index.points[cand] - q) ** 2, axis=1))
    order = np.lexsort((cand, dist))[:k]
    return [(int(cand[j]), float(dist[j])) for j in order]


def centroid(cloud: PointCloud) -> np.ndarray:
    if len(cloud) == 0:
        raise EmptyInput("centroid of empty cloud")
    return cloud.points.mean(axis=0)


def choose_start_point(cloud: PointCloud) -> int:
    """Index of the point farthest from the cloud centroid (ties: lowest)."""
    if len(cloud) == 0:
        raise EmptyInput("start point of empty cloud")
    c = centroid(cloud)
    d2 = np.sum((cloud.points - c) ** 2, axis=1)
    return int(np.argmax(d2))


def farthest_point_sample(cloud: PointCloud, k: int, start: int) -> np.ndarray:
    """Greedy max-min subsampling of ``k`` point indices, seeded at ``start``.

    Each step picks the point maximizing the minimum distance to everything
    already selected; np.argmax resolves ties to the lowest index.
    """
    n = len(cloud)
    if not 1 <= k <= n:
        raise InvalidArgument(f"k={k} outside [1, {n}]")
    if not 0 <= start < n:
        raise InvalidArgument(f"start={start} outside [0, {n})")
    pts = cloud.points
    chosen = np.empty(k, dtype=np.intp)
    chosen[0] = start
    min_d2 = np.sum((pts - pts[start]) ** 2, axis=1)
    min_d2[start] = -1.0  # sentinel: selected points can never win again
    for i in range(1, k):
        nxt = int(np.argmax(min_d2))
        chosen[i] = nxt
        np.minimum(min_d2, np.sum((pts - pts[nxt]) ** 2, axis=1), out=min_d2)
        min_d2[nxt] = -1.0
    return chosen


def normalize_cloud(cloud: PointCloud) -> PointCloud:
    """Center at the centroid and scale so the max radius is exactly 1."""
    if len(cloud) == 0:
        raise EmptyInput("normalize of empty cloud")
    centered = cloud.points - centroid(cloud)
    radius = float(np.max(np.linalg.norm(centered, axis=1)))
    if radius <= 0.0:
        raise DegenerateInput("all points identical; no extent to normalize")
    return cloud.with_points(centered / radius)


def standardize_cloud(cloud: PointCloud) -> PointCloud:
    """Shift/scale each axis to mean 0 and population variance 1."""
    if len(cloud) == 0:
        raise EmptyInput("standardize of empty cloud")
    mean = cloud.points.mean(axis=0)
    var = cloud.points.var(axis=0)
    if np.any(var <= 0.0):
        raise DegenerateInput(f"zero-variance axis: variances {var}")
    return cloud.with_points((cloud.points - mean) / np.sqrt(var))
