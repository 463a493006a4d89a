"""Interpretable per-point descriptors: PCA normals and 33-dim FPFH.

The descriptor concatenates three 11-bin histograms of the pair angles
(alpha, phi, theta) computed in the Darboux frame of each point pair,
aggregated over distance-weighted neighbors. Neighborhoods are k-NN (not
radius) so the descriptor is invariant to uniform scaling and, with
consistently oriented normals, to rigid motion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, SpatialIndex, centroid
from .errors import InvalidArgument, PreconditionFailed

BINS_PER_ANGLE = 11
FEATURE_DIM = 3 * BINS_PER_ANGLE


@dataclass(frozen=True)
class FpfhParams:
    normal_k: int = 16
    feature_k: int = 16
    bins_per_angle: int = BINS_PER_ANGLE

    def __post_init__(self):
        if self.normal_k < 3:
            raise InvalidArgument("normal_k must be >= 3")
        if self.feature_k < 1:
            raise InvalidArgument("feature_k must be >= 1")
        if self.bins_per_angle != BINS_PER_ANGLE:
            raise InvalidArgument(f"bins_per_angle is fixed at {BINS_PER_ANGLE}")


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """N x 33 descriptor rows; ``degenerate`` flags all-zero rows."""

    values: np.ndarray
    degenerate: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[1] != FEATURE_DIM:
            raise InvalidArgument(f"feature rows must be (n, {FEATURE_DIM})")
        flags = np.asarray(self.degenerate, dtype=bool)
        if flags.shape != (len(vals),):
            raise InvalidArgument("degenerate flag length differs from rows")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "degenerate", flags)
        vals.setflags(write=False)
        flags.setflags(write=False)

    def __len__(self) -> int:
        return len(self.values)


def estimate_normals(cloud: PointCloud, normal_k: int = 16):
    """PCA surface normals oriented away from the cloud centroid.

    Each normal is the unit eigenvector of the neighborhood covariance with
    the smallest eigenvalue; the neighborhood is the normal_k nearest
    points including the point itself. Returns (cloud with normals,
    degenerate flags); neighborhoods of rank < 2 get normal (0, 0, 1) and a
    raised flag.
    """
    n = len(cloud)
    if normal_k < 3:
        raise InvalidArgument("normal_k must be >= 3")
    if n < normal_k:
        raise InvalidArgument(f"need at least normal_k={normal_k} points, got {n}")
    pts = cloud.points
    index = SpatialIndex.build(cloud)
    _, nbr = index.query_bulk(pts, k=normal_k)

    hood = pts[nbr]                                # (n, k, 3)
    hood = hood - hood.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", hood, hood) / normal_k
    evals, evecs = np.linalg.eigh(cov)             # ascending eigenvalues
    normals = evecs[:, :, 0]

    scale = np.maximum(evals[:, 2], 0.0)
    degenerate = (scale <= 0.0) | (evals[:, 1] <= 1e-12 * scale)

    # Orient outward from the centroid; a coordinate-sign rule settles the
    # (rare) perpendicular case deterministically.
    outward = pts - centroid(cloud)
    dots = np.einsum("ni,ni->n", normals, outward)
    flip = dots < -1e-12
    normals[flip] *= -1.0
    ambiguous = np.abs(dots) <= 1e-12
    if np.any(ambiguous):
        sub = normals[ambiguous]
        lead = sub[np.arange(len(sub)), np.argmax(np.abs(sub), axis=1)]
        sub[lead < 0] *= -1.0
        normals[ambiguous] = sub

    normals[degenerate] = (0.0, 0.0, 1.0)
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = normals / lengths
    return cloud.with_normals(normals), degenerate


def _pair_angles(p, n_p, q, n_q):
    """Darboux-frame angle features for point pairs, vectorized.

    Inputs broadcast as (..., 3). Returns (alpha, phi, theta, valid) where
    invalid pairs (coincident points or a frame-degenerate direction) must
    be skipped by the caller.
    """
    d = q - p
    dist = np.linalg.norm(d, axis=-1)
    valid = dist > 0.0
    safe = np.where(valid, dist, 1.0)[..., None]
    dhat = d / safe

    a1 = np.einsum("...i,...i->...", n_p, dhat)
    a2 = np.einsum("...i,...i->...", n_q, dhat)
    # The source of the frame is the point whose normal is closer to the
    # connecting line; swapping also reverses the line direction.
    swap = np.abs(a1) < np.abs(a2)
    u = np.where(swap[..., None], n_q, n_p)
    n_t = np.where(swap[..., None], n_p, n_q)
    dvec = np.where(swap[..., None], -dhat, dhat)
    phi = np.where(swap, -a2, a1)

    v = np.cross(dvec, u)
    vnorm = np.linalg.norm(v, axis=-1)
    valid = valid & (vnorm > 0.0)
    v = v / np.where(valid, vnorm, 1.0)[..., None]
    w = np.cross(u, v)

    alpha = np.einsum("...i,...i->...", v, n_t)
    theta = np.arctan2(
        np.einsum("...i,...i->...", w, n_t),
        np.einsum("...i,...i->...", u, n_t),
    )
    return alpha, phi, theta, valid


def _bin_index(values, lo, hi):
    b = np.floor(BINS_PER_ANGLE * (values - lo) / (hi - lo)).astype(np.intp)
    return np.clip(b, 0, BINS_PER_ANGLE - 1)


def compute_fpfh(cloud: PointCloud, params: FpfhParams = FpfhParams()) -> FeatureMatrix:
    """FPFH rows for every point of a cloud that carries normals.

    SPFH(p) histograms the pair angles over the feature_k nearest neighbors
    of p (self excluded), each sub-histogram accumulated in percent. The
    final descriptor is SPFH(p) + (1/k) * sum_q SPFH(q)/|p-q|, renormalized
    so each 11-bin block sums to 100. Points with no usable pair (only
    coincident duplicates) yield an all-zero row flagged degenerate.
    """
    if cloud.normals is None:
        raise PreconditionFailed("compute_fpfh requires normals")
    n = len(cloud)
    k = min(params.feature_k, n - 1)
    if k < 1:
        raise InvalidArgument("cloud too small for any neighbor pair")

    pts, nrm = cloud.points, cloud.normals
    index = SpatialIndex.build(cloud)
    _, nbr = index.query_bulk(pts, k=k + 1)

    # Drop self from each neighbor list by index, not by distance, so exact
    # duplicate points are kept as (skippable) zero-distance pairs.
    rows = np.arange(n)[:, None]
    is_self = nbr == rows
    fallback = is_self.sum(axis=1) == 0
    if np.any(fallback):
        # >k duplicates of a point can crowd self out of the list; drop the
        # last entry instead for those rows.
        is_self[fallback, -1] = True
    keep = ~is_self
    nbr = nbr[keep].reshape(n, k)

    p = np.repeat(pts[:, None, :], k, axis=1)
    n_p = np.repeat(nrm[:, None, :], k, axis=1)
    q = pts[nbr]
    n_q = nrm[nbr]
    alpha, phi, theta, valid = _pair_angles(p, n_p, q, n_q)

    spfh = np.zeros((n, FEATURE_DIM))
    row_ids = np.broadcast_to(rows, (n, k))[valid]
    offsets = (
        _bin_index(alpha, -1.0, 1.0),
        _bin_index(phi, -1.0, 1.0),
        _bin_index(theta, -np.pi, np.pi),
    )
    for block, bins in enumerate(offsets):
        np.add.at(spfh, (row_ids, block * BINS_PER_ANGLE + bins[valid]), 1.0)

    pair_counts = valid.sum(axis=1)
    degenerate = pair_counts == 0
    # Each block holds one entry per valid pair; scale so blocks sum to 100.
    spfh *= 100.0 / np.where(degenerate, 1.0, pair_counts)[:, None]

    dist = np.linalg.norm(q - p, axis=-1)
    positive = dist > 0.0
    weights = np.where(positive, 1.0 / np.where(positive, dist, 1.0), 0.0)
    wcount = np.maximum(positive.sum(axis=1), 1)
    neighbor_term = np.einsum("nk,nkf->nf", weights, spfh[nbr])
    fpfh = spfh + neighbor_term / wcount[:, None]

    for block in range(3):
        sl = slice(block * BINS_PER_ANGLE, (block + 1) * BINS_PER_ANGLE)
        sums = fpfh[:, sl].sum(axis=1)
        nz = sums > 0.0
        fpfh[nz, sl] *= 100.0 / sums[nz, None]

    fpfh[degenerate] = 0.0
    return FeatureMatrix(values=fpfh, degenerate=degenerate)
