"""Split one cloud into k balanced semantic spaces.

Seeding is farthest point sampling started at the point farthest from the
centroid; assignment is greedy and capacity-capped, followed by a repair
pass that enforces the size-ratio constraint max_i(size) <= delta *
min_j(size). Everything is deterministic for fixed inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud, choose_start_point, farthest_point_sample
from .errors import InfeasibleBalance, InvalidArgument


@dataclass(frozen=True)
class CutParams:
    k: int
    delta: float = 1.5
    max_iters: int = 50
    seed: int = 0  # reserved for degenerate fallbacks; current paths are deterministic

    def __post_init__(self):
        if self.k < 1:
            raise InvalidArgument("k must be >= 1")
        if not self.delta >= 1.0:
            raise InvalidArgument("delta must be >= 1")
        if self.max_iters < 1:
            raise InvalidArgument("max_iters must be >= 1")


@dataclass(frozen=True, eq=False)
class SemanticPartition:
    """Per-point cluster labels with centroids, sizes and optional ranks."""

    labels: np.ndarray
    centroids: np.ndarray
    k: int
    delta: float
    rank: np.ndarray | None = None
    objective_history: tuple = field(default=(), repr=False)

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.intp)
        cents = np.ascontiguousarray(self.centroids, dtype=np.float64)
        if cents.shape != (self.k, 3):
            raise InvalidArgument(f"centroids must be ({self.k}, 3)")
        if labels.min(initial=0) < 0 or labels.max(initial=0) >= self.k:
            raise InvalidArgument("labels outside [0, k)")
        sizes = np.bincount(labels, minlength=self.k)
        if np.any(sizes < 1):
            raise InvalidArgument("every cluster must hold at least one point")
        if _ratio_violated(sizes, self.delta):
            raise InvalidArgument(
                f"size ratio violated: sizes {sizes.tolist()} with delta={self.delta}"
            )
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "centroids", cents)
        labels.setflags(write=False)
        cents.setflags(write=False)
        if self.rank is not None:
            r = np.ascontiguousarray(self.rank, dtype=np.intp)
            if sorted(r.tolist()) != list(range(self.k)):
                raise InvalidArgument("rank must be a permutation of 0..k-1")
            object.__setattr__(self, "rank", r)
            r.setflags(write=False)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def with_rank(self, rank: np.ndarray) -> "SemanticPartition":
        return SemanticPartition(
            self.labels, self.centroids, self.k, self.delta, rank,
            self.objective_history,
        )


def min_feasible_delta(n: int, k: int) -> float:
    """Smallest size ratio any k-way partition of n points can achieve."""
    lo = n // k
    hi = math.ceil(n / k)
    return hi / lo


def _ratio_violated(sizes: np.ndarray, delta: float) -> bool:
    # The relative slack keeps integer boundary cases (delta*min rounding a
    # hair below an integer) from counting as violations.
    return bool(sizes.max() > delta * sizes.min() * (1.0 + 1e-12))


def _distance_matrix(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _greedy_capped(d2: np.ndarray, cap: int) -> np.ndarray:
    """Nearest-available-centroid assignment, closest points first."""
    n, k = d2.shape
    best = np.min(d2, axis=1)
    order = np.lexsort((np.arange(n), best))
    pref = np.argsort(d2, axis=1, kind="stable")
    labels = np.empty(n, dtype=np.intp)
    remaining = [cap] * k
    for i in order:
        for c in pref[i]:
            if remaining[c] > 0:
                labels[i] = c
                remaining[c] -= 1
                break
    return labels


def _repair_balance(points, d2, labels, k, delta):
    """Move points from the largest to the smallest clusters until the
    size-ratio constraint holds. Each move picks the member of the largest
    cluster farthest from its centroid and sends it to the nearest
    currently-smallest cluster."""
    sizes = np.bincount(labels, minlength=k)
    budget = len(labels) * k + k  # each move strictly reduces sum(sizes^2)
    while _ratio_violated(sizes, delta):
        budget -= 1
        if budget < 0:
            raise AssertionError("balance repair failed to terminate")
        src = int(np.argmax(sizes))
        members = np.flatnonzero(labels == src)
        point = members[int(np.argmax(d2[members, src]))]
        low = np.flatnonzero(sizes == sizes.min())
        dst = int(low[int(np.argmin(d2[point, low]))])
        labels[point] = dst
        sizes[src] -= 1
        sizes[dst] += 1
    return labels


def balanced_assign(points, centroids, delta: float) -> np.ndarray:
    """Assign every point to a centroid under the size-ratio constraint.

    delta = inf degrades to plain nearest-centroid assignment. Raises
    InfeasibleBalance when no integer partition of n into k parts can
    satisfy the ratio.
    """
    points = np.asarray(points, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    n, k = len(points), len(centroids)
    if n < k:
        raise InvalidArgument(f"need n >= k, got n={n}, k={k}")
    d2 = _distance_matrix(points, centroids)
    if math.isinf(delta):
        return np.argmin(d2, axis=1)
    feasible = min_feasible_delta(n, k)
    if delta < feasible * (1.0 - 1e-12):
        raise InfeasibleBalance(delta, feasible)
    cap = math.ceil(delta * n / k)
    labels = _greedy_capped(d2, cap)
    return _repair_balance(points, d2, labels, k, delta)


def _reseed_empty(points, centroids, labels, k):
    """Place each empty cluster's centroid on the point farthest from it."""
    centroids = centroids.copy()
    sizes = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(sizes == 0):
        d2 = np.sum((points - centroids[c]) ** 2, axis=1)
        centroids[c] = points[int(np.argmax(d2))]
    return centroids


def _objective(points, labels, centroids) -> float:
    return float(np.sum((points - centroids[labels]) ** 2))


def cut(cloud: PointCloud, params: CutParams) -> SemanticPartition:
    """Partition a cloud into params.k balanced semantic spaces.

    Lloyd iterations on top of balanced_assign, stopping at a label fixed
    point, at max_iters, or when an iteration would increase the summed
    squared distance (the recorded objective history is therefore
    non-increasing).
    """
    n = len(cloud)
    if n < params.k:
        raise InvalidArgument(f"need at least k={params.k} points, got {n}")
    pts = cloud.points
    seeds = farthest_point_sample(cloud, params.k, choose_start_point(cloud))
    centroids = pts[seeds].copy()

    labels = None
    best_obj = math.inf
    history: list[float] = []
    for _ in range(params.max_iters):
        new_labels = balanced_assign(pts, centroids, params.delta)
        for _retry in range(params.k):
            sizes = np.bincount(new_labels, minlength=params.k)
            if sizes.min() > 0:
                break
            centroids = _reseed_empty(pts, centroids, new_labels, params.k)
            new_labels = balanced_assign(pts, centroids, params.delta)
        else:
            # Deterministic last resort: hand each residual empty cluster
            # its farthest point directly.
            for c in np.flatnonzero(np.bincount(new_labels, minlength=params.k) == 0):
                d2 = np.sum((pts - centroids[c]) ** 2, axis=1)
                movable = np.flatnonzero(np.bincount(new_labels, minlength=params.k)[new_labels] > 1)
                new_labels[movable[int(np.argmax(d2[movable]))]] = c

        if labels is not None and np.array_equal(new_labels, labels):
            break
        new_centroids = np.stack(
            [pts[new_labels == c].mean(axis=0) for c in range(params.k)]
        )
        obj = _objective(pts, new_labels, new_centroids)
        if obj > best_obj:
            break
        labels, centroids, best_obj = new_labels, new_centroids, obj
        history.append(obj)

    return SemanticPartition(
        labels=labels,
        centroids=centroids,
        k=params.k,
        delta=params.delta,
        objective_history=tuple(history),
    )
