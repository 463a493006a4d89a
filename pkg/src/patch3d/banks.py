"""Separated modeling: one feature memory bank per aligned semantic space.

Training features land in exactly one bank (the one matching their aligned
semantic id); a test point is scored as the exact L2 distance to the
nearest vector of its own bank and never sees any other bank. Every query
is logged so confinement can be audited.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, normalize_cloud
from .cutting import CutParams, cut
from .errors import EmptyBank, InvalidArgument, ParseError, PreconditionFailed
from .fpfh import FEATURE_DIM, FeatureMatrix, FpfhParams, compute_fpfh, estimate_normals
from .matching import rank_partition

_MAGIC = b"P3DB"
_VERSION = 1


class MemoryBankSet:
    """k disjoint banks of 33-dim feature rows, immutable after build."""

    def __init__(self, banks: list[np.ndarray], fpfh_params: FpfhParams):
        self.banks = []
        for i, b in enumerate(banks):
            arr = np.ascontiguousarray(b, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != FEATURE_DIM:
                raise InvalidArgument(f"bank {i} must be (m, {FEATURE_DIM})")
            arr.setflags(write=False)
            self.banks.append(arr)
        self.fpfh_params = fpfh_params
        self.k = len(self.banks)
        # Cached squared norms for the distance prefilter.
        self._norms2 = [np.einsum("ij,ij->i", b, b) for b in self.banks]
        self.query_log: list[tuple[int, int]] = []  # (query ordinal, bank id)
        self._query_counter = 0

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(b) for b in self.banks])

    def nearest(self, bank_id: int, feature: np.ndarray) -> tuple[float, int]:
        """Exact L2 distance to the nearest vector of bank ``bank_id``.

        Returns (distance, comparisons). A squared-norm expansion prefilters
        candidates; every candidate within an error margin of the best is
        re-checked with the direct subtract-square-sum formula, so the
        reported distance is exact (0.0 for a stored duplicate).
        """
        if not 0 <= bank_id < self.k:
            raise InvalidArgument(f"bank id {bank_id} outside [0, {self.k})")
        bank = self.banks[bank_id]
        if len(bank) == 0:
            raise EmptyBank(bank_id)
        self.query_log.append((self._query_counter, bank_id))
        self._query_counter += 1

        f = np.asarray(feature, dtype=np.float64).reshape(FEATURE_DIM)
        d2 = self._norms2[bank_id] - 2.0 * (bank @ f) + f @ f
        m = float(np.min(d2))
        # Margin covers float64 round-off of the expansion at histogram scale.
        margin = 1e-6 * max(1.0, abs(m))
        cand = np.flatnonzero(d2 <= m + margin)
        exact = np.min(np.sum((bank[cand] - f) ** 2, axis=1))
        return float(np.sqrt(exact)), len(bank)

    def reset_query_log(self):
        self.query_log = []
        self._query_counter = 0


@dataclass(frozen=True, eq=False)
class ScoreReport:
    """Per-point anomaly scores for one test cloud."""

    point_scores: np.ndarray
    object_score: float
    semantic_of_point: np.ndarray
    comparisons_made: int
    degenerate: np.ndarray
    consulted_banks: np.ndarray
    feature_seconds: float = 0.0
    cut_seconds: float = 0.0
    query_seconds: float = 0.0

    def __post_init__(self):
        scores = np.asarray(self.point_scores, dtype=np.float64)
        if np.any(~np.isfinite(scores)) or np.any(scores < 0):
            raise InvalidArgument("scores must be finite and non-negative")
        if scores.size and abs(self.object_score - scores.max()) > 0:
            raise InvalidArgument("object_score must equal max point score")


def build_banks(clouds, partitions, fpfh_params: FpfhParams,
                features: list[FeatureMatrix] | None = None) -> MemoryBankSet:
    """Embed every training point's feature into its semantic bank.

    ``partitions`` must already carry ranks (aligned semantics) and share
    one k. Degenerate feature rows are dropped. Precomputed ``features``
    (matching order) skip the per-cloud descriptor pass.
    """
    clouds = list(clouds)
    partitions = list(partitions)
    if len(clouds) != len(partitions) or not clouds:
        raise InvalidArgument("need matching non-empty clouds and partitions")
    ks = {p.k for p in partitions}
    if len(ks) != 1:
        raise InvalidArgument("partitions disagree on k")
    k = ks.pop()
    rows: list[list[np.ndarray]] = [[] for _ in range(k)]
    for ci, (cloud, part) in enumerate(zip(clouds, partitions)):
        if part.rank is None:
            raise PreconditionFailed("partition lacks ranks; run rank_partition first")
        if features is not None:
            fm = features[ci]
        else:
            with_normals, _ = estimate_normals(cloud, fpfh_params.normal_k)
            fm = compute_fpfh(with_normals, fpfh_params)
        semantic = part.rank[part.labels]
        keep = ~fm.degenerate
        for s in range(k):
            sel = keep & (semantic == s)
            if np.any(sel):
                rows[s].append(fm.values[sel])
    banks = []
    for s in range(k):
        if not rows[s]:
            raise EmptyBank(s, f"no training features landed in semantic space {s}")
        banks.append(np.vstack(rows[s]))
    return MemoryBankSet(banks, fpfh_params)


def score_point(feature: np.ndarray, semantic_id: int, banks: MemoryBankSet) -> float:
    """Anomaly score of one feature: NN distance within its own bank."""
    dist, _ = banks.nearest(semantic_id, feature)
    return dist


def _nearest_bulk(
    banks: MemoryBankSet, bank_id: int, feats: np.ndarray, block: int = 1024
) -> np.ndarray:
    """Exact NN distances for many queries against one bank."""
    bank = banks.banks[bank_id]
    if len(bank) == 0:
        raise EmptyBank(bank_id)
    bank_t = bank.T
    norms2 = banks._norms2[bank_id]
    out = np.empty(len(feats))
    for lo in range(0, len(feats), block):
        chunk = feats[lo : lo + block]
        d2 = (
            np.einsum("ij,ij->i", chunk, chunk)[:, None]
            - 2.0 * chunk @ bank_t
            + norms2[None, :]
        )
        m = d2.min(axis=1)
        thresh = m + 1e-6 * np.maximum(1.0, np.abs(m))
        best = np.argmin(d2, axis=1)
        exact = np.sum((bank[best] - chunk) ** 2, axis=1)
        counts = np.sum(d2 <= thresh[:, None], axis=1)
        for r in np.flatnonzero(counts > 1):
            cand = np.flatnonzero(d2[r] <= thresh[r])
            exact[r] = np.min(np.sum((bank[cand] - chunk[r]) ** 2, axis=1))
        out[lo : lo + block] = np.sqrt(np.maximum(exact, 0.0))
    return out


def score_cloud(
    cloud: PointCloud,
    banks: MemoryBankSet,
    cut_params: CutParams,
    normalize: bool = True,
    features: FeatureMatrix | None = None,
) -> ScoreReport:
    """Run the full test-side pipeline on one cloud.

    The cloud is partitioned and ranked with the same parameters used at
    training time; each point's feature is scored only against the bank of
    its own semantic id. Degenerate feature rows score 0 and are flagged.
    """
    import time

    if cut_params.k != banks.k:
        raise InvalidArgument(f"banks built with k={banks.k}, got cut k={cut_params.k}")
    work = normalize_cloud(cloud) if normalize else cloud

    t0 = time.perf_counter()
    if features is None:
        with_normals, _ = estimate_normals(work, banks.fpfh_params.normal_k)
        features = compute_fpfh(with_normals, banks.fpfh_params)
    t1 = time.perf_counter()
    part = rank_partition(work, cut(work, cut_params))
    semantic = part.rank[part.labels]
    t2 = time.perf_counter()

    n = len(work)
    scores = np.zeros(n)
    comparisons = 0
    consulted = np.full(n, -1, dtype=np.intp)
    live = ~features.degenerate
    for s in range(banks.k):
        sel = live & (semantic == s)
        if not np.any(sel):
            continue
        scores[sel] = _nearest_bulk(banks, s, features.values[sel])
        consulted[sel] = s
        count = int(np.sum(sel))
        comparisons += count * len(banks.banks[s])
        start = banks._query_counter
        banks.query_log.extend(
            (start + i, s) for i in range(count)
        )
        banks._query_counter += count
    t3 = time.perf_counter()

    return ScoreReport(
        point_scores=scores,
        object_score=float(scores.max()) if n else 0.0,
        semantic_of_point=semantic,
        comparisons_made=comparisons,
        degenerate=features.degenerate,
        consulted_banks=consulted,
        feature_seconds=t1 - t0,
        cut_seconds=t2 - t1,
        query_seconds=t3 - t2,
    )


def save_banks(banks: MemoryBankSet, path, metadata: dict | None = None):
    """Write the flat binary container plus a key=value sidecar.

    Layout: magic "P3DB", u32 version, u32 k, u32 dim, k x u64 bank sizes,
    then each bank's rows as little-endian float64, row-major.
    """
    path = str(path)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", _VERSION, banks.k, FEATURE_DIM))
        fh.write(struct.pack(f"<{banks.k}Q", *[len(b) for b in banks.banks]))
        for b in banks.banks:
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    meta = {
        "normal_k": banks.fpfh_params.normal_k,
        "feature_k": banks.fpfh_params.feature_k,
        "k": banks.k,
    }
    if metadata:
        meta.update(metadata)
    with open(path + ".meta", "w", encoding="utf-8") as fh:
        for key in meta:
            fh.write(f"{key} = {meta[key]}\n")


def load_banks(path) -> tuple[MemoryBankSet, dict]:
    """Read a bank container and its sidecar; bit-exact inverse of save."""
    path = str(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ParseError(f"bad magic {blob[:4]!r}", 0)
    if len(blob) < 16:
        raise ParseError("truncated header", len(blob))
    version, k, dim = struct.unpack_from("<III", blob, 4)
    if version != _VERSION:
        raise ParseError(f"unsupported version {version}", 4)
    if dim != FEATURE_DIM:
        raise ParseError(f"unsupported feature dim {dim}", 12)
    off = 16
    if len(blob) < off + 8 * k:
        raise ParseError("truncated bank size table", len(blob))
    sizes = struct.unpack_from(f"<{k}Q", blob, off)
    off += 8 * k
    banks = []
    for m in sizes:
        nbytes = m * FEATURE_DIM * 8
        if len(blob) < off + nbytes:
            raise ParseError("truncated bank payload", len(blob))
        arr = np.frombuffer(blob, dtype="<f8", count=m * FEATURE_DIM, offset=off)
        banks.append(arr.reshape(m, FEATURE_DIM).astype(np.float64))
        off += nbytes
    if off != len(blob):
        raise ParseError("trailing bytes after final bank", off)

    meta: dict = {}
    with open(path + ".meta", "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and "=" in line:
                key, _, value = line.partition("=")
                meta[key.strip()] = value.strip()
    params = FpfhParams(
        normal_k=int(meta.get("normal_k", 16)),
        feature_k=int(meta.get("feature_k", 16)),
    )
    return MemoryBankSet(banks, params), meta
