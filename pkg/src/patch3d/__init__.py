"""Point-cloud anomaly detection with semantically partitioned FPFH banks."""

from .banks import (
    MemoryBankSet,
    ScoreReport,
    build_banks,
    load_banks,
    save_banks,
    score_cloud,
    score_point,
)
from .cloud import (
    PointCloud,
    SpatialIndex,
    centroid,
    choose_start_point,
    farthest_point_sample,
    knn,
    normalize_cloud,
    standardize_cloud,
)
from .config import RunConfig, load_config, validate
from .cutting import CutParams, SemanticPartition, balanced_assign, cut
from .fpfh import FeatureMatrix, FpfhParams, compute_fpfh, estimate_normals
from .matching import AlignedSemantics, match_across, rank_partition
from .metrics import (
    EvalReport,
    aupr,
    auroc,
    orthogonality_diag,
    partition_accuracy,
    shift_stats,
)
from .plyio import read_ply, write_ply
from .synth import AnomalySpec, SynthSpec, inject_anomaly, make_shape

__version__ = "0.1.0"

__all__ = [
    "AlignedSemantics", "AnomalySpec", "CutParams", "EvalReport",
    "FeatureMatrix", "FpfhParams", "MemoryBankSet", "PointCloud", "RunConfig",
    "ScoreReport", "SemanticPartition", "SpatialIndex", "SynthSpec",
    "aupr", "auroc", "balanced_assign", "build_banks", "centroid",
    "choose_start_point", "compute_fpfh", "cut", "estimate_normals",
    "farthest_point_sample", "inject_anomaly", "knn", "load_banks",
    "load_config", "make_shape", "match_across", "normalize_cloud",
    "orthogonality_diag", "partition_accuracy", "rank_partition", "read_ply",
    "save_banks", "score_cloud", "score_point", "shift_stats",
    "standardize_cloud", "validate", "write_ply",
]
