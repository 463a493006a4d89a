"""Align semantic spaces across clouds by centroid-distance rank.

Within one cloud, clusters are ordered by the distance between the cluster
centroid (mean of its member points) and the cloud centroid; rank 0 is the
nearest cluster, ties broken by cluster id. Clusters holding the same rank
in different clouds are treated as the same semantic space. The ordering
is invariant to rigid motion and uniform scaling of a cloud, which is what
makes the rank a usable cross-cloud key.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, centroid
from .cutting import SemanticPartition
from .errors import InvalidArgument


@dataclass(frozen=True, eq=False)
class AlignedSemantics:
    """Per-cloud bijections cluster id -> rank, all sharing one k."""

    ranks: tuple  # tuple of np.ndarray, one per cloud
    k: int

    def __post_init__(self):
        for r in self.ranks:
            if sorted(np.asarray(r).tolist()) != list(range(self.k)):
                raise InvalidArgument("each rank map must be a bijection onto 0..k-1")

    def semantic_of(self, cloud_idx: int, labels: np.ndarray) -> np.ndarray:
        """Map per-point cluster labels of one cloud to aligned semantic ids."""
        return np.asarray(self.ranks[cloud_idx])[labels]


def cluster_centroid_distances(
    cloud: PointCloud, partition: SemanticPartition
) -> np.ndarray:
    """Distance from each cluster's point-mean to the cloud centroid."""
    if len(partition.labels) != len(cloud):
        raise InvalidArgument("partition does not belong to this cloud")
    c = centroid(cloud)
    out = np.empty(partition.k)
    for j in range(partition.k):
        members = cloud.points[partition.labels == j]
        out[j] = np.linalg.norm(members.mean(axis=0) - c)
    return out


def rank_partition(cloud: PointCloud, partition: SemanticPartition) -> SemanticPartition:
    """Attach ranks: 0 for the cluster nearest the cloud centroid, ascending."""
    d = cluster_centroid_distances(cloud, partition)
    order = np.lexsort((np.arange(partition.k), d))
    rank = np.empty(partition.k, dtype=np.intp)
    rank[order] = np.arange(partition.k)
    return partition.with_rank(rank)


def match_across(clouds_with_partitions) -> AlignedSemantics:
    """Rank every (cloud, partition) pair and merge equal ranks across clouds."""
    pairs = list(clouds_with_partitions)
    if not pairs:
        raise InvalidArgument("nothing to match")
    ks = {p.k for _, p in pairs}
    if len(ks) != 1:
        raise InvalidArgument(f"all partitions must share one k, got {sorted(ks)}")
    ranked = [rank_partition(cloud, part) for cloud, part in pairs]
    return AlignedSemantics(ranks=tuple(p.rank for p in ranked), k=ks.pop())
