"""End-to-end orchestration: dataset synthesis, fit, score, eval, sweep, bench.

Artifacts land under the configured output directory:

    banks/<class>.p3db (+ .meta)   fitted memory banks
    scores/<class>/<sample>.csv    per-point scores
    scores/<class>/objects.csv     per-sample object scores
    eval.csv / eval.txt            metric report
    sweep.csv / sweep.svg          K sweep
    bench.csv                      phase timings

Everything except wall-clock columns is deterministic for a fixed config.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import metrics
from .banks import MemoryBankSet, ScoreReport, build_banks, load_banks, save_banks, score_cloud
from .cloud import PointCloud, normalize_cloud
from .config import RunConfig, worker_count
from .cutting import CutParams, cut
from .errors import InvalidArgument, Patch3DError
from .fpfh import FeatureMatrix, FpfhParams, compute_fpfh, estimate_normals
from .matching import rank_partition
from .plyio import read_ply, write_ply
from .svg import line_chart
from .synth import AnomalySpec, SynthSpec, inject_anomaly, make_shape


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    with open(str(path), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(str(path), "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


# ---------------------------------------------------------------------------
# Dataset synthesis


def _pose_jitter(cloud: PointCloud, rng: np.random.Generator) -> PointCloud:
    """Random similarity transform so raw files carry pose/scale spread."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    rot = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
    scale = rng.uniform(0.5, 2.5)
    shift = rng.uniform(-2.0, 2.0, size=3)
    pts = cloud.points @ rot.T * scale + shift
    normals = cloud.normals @ rot.T if cloud.normals is not None else None
    return PointCloud(pts, normals, cloud.anomaly_mask, cloud.id)


def run_synth(cfg: RunConfig) -> None:
    """Write the dataset tree: <root>/<class>/{train,test,gt}."""
    for ci, kind in enumerate(cfg.classes):
        base = os.path.join(cfg.dataset_root, kind)
        for sub in ("train", "test", "gt"):
            os.makedirs(os.path.join(base, sub), exist_ok=True)
        for idx in range(cfg.train_count):
            shape_seed = _derived_seed(cfg.seed, ci, 0, idx)
            cloud = make_shape(SynthSpec(kind, cfg.n_points, cfg.noise_sigma, shape_seed))
            if cfg.pose_jitter:
                cloud = _pose_jitter(cloud, np.random.default_rng(_derived_seed(cfg.seed, ci, 2, idx)))
            write_ply(cloud, os.path.join(base, "train", f"{kind}_train_{idx:03d}.ply"))
        n_anomalous = int(round(cfg.test_count * cfg.anomaly_fraction))
        for idx in range(cfg.test_count):
            shape_seed = _derived_seed(cfg.seed, ci, 1, idx)
            cloud = make_shape(SynthSpec(kind, cfg.n_points, cfg.noise_sigma, shape_seed))
            if idx < n_anomalous:
                for region in range(cfg.anomaly_regions):
                    cloud = inject_anomaly(
                        cloud,
                        AnomalySpec(
                            region_radius=cfg.region_radius,
                            amplitude_lo=cfg.amplitude_lo,
                            amplitude_hi=cfg.amplitude_hi,
                            sign=cfg.anomaly_sign,
                            seed=_derived_seed(cfg.seed, ci, 3, idx, region),
                        ),
                    )
            mask = (
                cloud.anomaly_mask
                if cloud.anomaly_mask is not None
                else np.zeros(len(cloud), dtype=bool)
            )
            if cfg.pose_jitter:
                cloud = _pose_jitter(cloud, np.random.default_rng(_derived_seed(cfg.seed, ci, 4, idx)))
            stem = f"{kind}_test_{idx:03d}"
            write_ply(cloud, os.path.join(base, "test", f"{stem}.ply"))
            with open(os.path.join(base, "gt", f"{stem}.txt"), "w", encoding="utf-8") as fh:
                fh.write("\n".join("1" if m else "0" for m in mask) + "\n")


# ---------------------------------------------------------------------------
# Loading and shared preprocessing


@dataclass(frozen=True, eq=False)
class PreparedCloud:
    name: str
    raw: PointCloud
    work: PointCloud            # normalized (or raw if normalization is off)
    features: FeatureMatrix
    feature_seconds: float


def dataset_classes(root: str) -> list[str]:
    if not os.path.isdir(root):
        raise FileNotFoundError(f"dataset root {root!r} does not exist")
    names = sorted(
        d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d, "train"))
    )
    if not names:
        raise FileNotFoundError(f"no classes with a train/ split under {root!r}")
    return names


def _ply_files(folder: str) -> list[str]:
    if not os.path.isdir(folder):
        raise FileNotFoundError(f"missing dataset folder {folder!r}")
    files = sorted(f for f in os.listdir(folder) if f.endswith(".ply"))
    if not files:
        raise FileNotFoundError(f"no .ply files in {folder!r}")
    return [os.path.join(folder, f) for f in files]


def prepare_cloud(name: str, cloud: PointCloud, cfg: RunConfig) -> PreparedCloud:
    work = normalize_cloud(cloud) if cfg.normalize else cloud
    t0 = time.perf_counter()
    with_normals, _ = estimate_normals(work, cfg.normal_k)
    feats = compute_fpfh(with_normals, FpfhParams(cfg.normal_k, cfg.feature_k))
    return PreparedCloud(name, cloud, work, feats, time.perf_counter() - t0)


def _prepare_many(paths: list[str], cfg: RunConfig) -> list[PreparedCloud]:
    def job(path):
        stem = os.path.splitext(os.path.basename(path))[0]
        return prepare_cloud(stem, read_ply(path), cfg)

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        return list(pool.map(job, paths))


class SuiteData:
    """Loaded and feature-extracted dataset, reusable across K values."""

    def __init__(self, cfg: RunConfig):
        self.classes = dataset_classes(cfg.dataset_root)
        self.train: dict[str, list[PreparedCloud]] = {}
        self.test: dict[str, list[PreparedCloud]] = {}
        for cls in self.classes:
            base = os.path.join(cfg.dataset_root, cls)
            self.train[cls] = _prepare_many(_ply_files(os.path.join(base, "train")), cfg)
            self.test[cls] = _prepare_many(_ply_files(os.path.join(base, "test")), cfg)

    def gt_mask(self, cfg: RunConfig, cls: str, stem: str, n_points: int) -> np.ndarray:
        path = os.path.join(cfg.dataset_root, cls, "gt", f"{stem}.txt")
        if not os.path.isfile(path):
            raise FileNotFoundError(f"missing ground truth file {path!r}")
        with open(path, "r", encoding="utf-8") as fh:
            vals = [ln.strip() for ln in fh if ln.strip()]
        if len(vals) != n_points:
            raise InvalidArgument(
                f"{path!r} has {len(vals)} labels for {n_points} points"
            )
        return np.array([v == "1" for v in vals])


# ---------------------------------------------------------------------------
# fit / score / eval


def _cut_params(cfg: RunConfig) -> CutParams:
    return CutParams(k=cfg.k, delta=cfg.delta, seed=cfg.seed)


def fit_class(train: list[PreparedCloud], cfg: RunConfig) -> MemoryBankSet:
    params = _cut_params(cfg)
    partitions = [rank_partition(p.work, cut(p.work, params)) for p in train]
    return build_banks(
        [p.work for p in train],
        partitions,
        FpfhParams(cfg.normal_k, cfg.feature_k),
        features=[p.features for p in train],
    )


def run_fit(cfg: RunConfig, data: SuiteData | None = None) -> dict[str, MemoryBankSet]:
    data = data or SuiteData(cfg)
    out = os.path.join(cfg.out_dir, "banks")
    os.makedirs(out, exist_ok=True)
    banks_by_class = {}
    for cls in data.classes:
        banks = fit_class(data.train[cls], cfg)
        save_banks(
            banks,
            os.path.join(out, f"{cls}.p3db"),
            metadata={
                "class": cls,
                "delta": cfg.delta,
                "normalize": cfg.normalize,
                "seed": cfg.seed,
                "train_files": ";".join(p.name for p in data.train[cls]),
            },
        )
        banks_by_class[cls] = banks
    return banks_by_class


def run_score(
    cfg: RunConfig,
    data: SuiteData | None = None,
    banks_by_class: dict[str, MemoryBankSet] | None = None,
) -> dict[str, dict[str, ScoreReport]]:
    data = data or SuiteData(cfg)
    if banks_by_class is None:
        banks_by_class = {}
        for cls in data.classes:
            path = os.path.join(cfg.out_dir, "banks", f"{cls}.p3db")
            if not os.path.isfile(path):
                raise FileNotFoundError(f"missing bank file {path!r}; run fit first")
            banks_by_class[cls], _ = load_banks(path)
    params = _cut_params(cfg)
    reports: dict[str, dict[str, ScoreReport]] = {}
    for cls in data.classes:
        banks = banks_by_class[cls]
        folder = os.path.join(cfg.out_dir, "scores", cls)
        os.makedirs(folder, exist_ok=True)

        def job(prep: PreparedCloud, banks=banks):
            return score_cloud(prep.work, banks, params, normalize=False, features=prep.features)

        with ThreadPoolExecutor(max_workers=worker_count()) as pool:
            results = list(pool.map(job, data.test[cls]))
        reports[cls] = {}
        object_rows = []
        for prep, rep in zip(data.test[cls], results):
            reports[cls][prep.name] = rep
            rows = zip(
                range(len(rep.point_scores)),
                rep.point_scores,
                rep.semantic_of_point,
                rep.degenerate.astype(int),
            )
            write_csv(
                os.path.join(folder, f"{prep.name}.csv"),
                ("point_index", "score", "semantic_id", "degenerate"),
                rows,
            )
            object_rows.append(
                (prep.name, len(rep.point_scores), rep.object_score, rep.comparisons_made)
            )
        write_csv(
            os.path.join(folder, "objects.csv"),
            ("sample", "n_points", "object_score", "comparisons_made"),
            object_rows,
        )
    return reports


def read_score_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (scores, semantic ids, degenerate flags) for one sample."""
    header, rows = read_csv(path)
    idx = {name: i for i, name in enumerate(header)}
    scores = np.array([float(r[idx["score"]]) for r in rows])
    semantics = np.array([int(r[idx["semantic_id"]]) for r in rows], dtype=np.intp)
    degenerate = np.array([r[idx["degenerate"]] == "1" for r in rows])
    return scores, semantics, degenerate


def run_eval(cfg: RunConfig, data: SuiteData | None = None) -> metrics.EvalReport:
    data = data or SuiteData(cfg)
    rows = []
    for cls in data.classes:
        folder = os.path.join(cfg.out_dir, "scores", cls)
        if not os.path.isdir(folder):
            raise FileNotFoundError(f"missing scores for class {cls!r}; run score first")
        point_scores, point_labels = [], []
        object_scores, object_labels = [], []
        total_comparisons = 0
        total_points = 0
        header, obj_rows = read_csv(os.path.join(folder, "objects.csv"))
        idx = {name: i for i, name in enumerate(header)}
        for row in obj_rows:
            stem = row[idx["sample"]]
            n_points = int(row[idx["n_points"]])
            scores, _, _ = read_score_csv(os.path.join(folder, f"{stem}.csv"))
            mask = data.gt_mask(cfg, cls, stem, n_points)
            point_scores.append(scores)
            point_labels.append(mask)
            object_scores.append(float(row[idx["object_score"]]))
            object_labels.append(bool(mask.any()))
            total_comparisons += int(row[idx["comparisons_made"]])
            total_points += n_points

        pooled_scores = np.concatenate(point_scores)
        pooled_labels = np.concatenate(point_labels)
        raw_train = np.vstack([p.raw.points for p in data.train[cls]])
        raw_test = np.vstack([p.raw.points for p in data.test[cls]])
        norm_train = np.vstack([p.work.points for p in data.train[cls]])
        norm_test = np.vstack([p.work.points for p in data.test[cls]])
        coord_raw = metrics.shift_stats(raw_train, raw_test)
        coord_norm = metrics.shift_stats(norm_train, norm_test)
        if cfg.feature_shift:
            fpfh_shift = metrics.shift_stats(
                np.vstack([p.features.values for p in data.train[cls]]),
                np.vstack([p.features.values for p in data.test[cls]]),
            )
        else:
            fpfh_shift = (None, None)

        rows.append(
            metrics.EvalClassRow(
                name=cls,
                o_auroc=metrics.auroc(object_scores, object_labels),
                o_aupr=metrics.aupr(object_scores, object_labels),
                p_auroc=metrics.auroc(pooled_scores, pooled_labels),
                p_aupr=metrics.aupr(pooled_scores, pooled_labels),
                ac=None,  # no semantic ground truth in the dataset layout
                nub=cfg.k,
                coord_shift_raw_mean=coord_raw[0],
                coord_shift_raw_var=coord_raw[1],
                coord_shift_norm_mean=coord_norm[0],
                coord_shift_norm_var=coord_norm[1],
                fpfh_shift_mean=fpfh_shift[0],
                fpfh_shift_var=fpfh_shift[1],
                comparisons_per_query=total_comparisons / total_points,
            )
        )
    report = metrics.EvalReport(rows=tuple(rows))
    os.makedirs(cfg.out_dir, exist_ok=True)
    metrics.write_eval_csv(report, os.path.join(cfg.out_dir, "eval.csv"))
    with open(os.path.join(cfg.out_dir, "eval.txt"), "w", encoding="utf-8") as fh:
        fh.write(metrics.format_eval_text(report) + "\n")
    return report


# ---------------------------------------------------------------------------
# sweep-k and bench


SWEEP_COLUMNS = (
    "k", "p_auroc", "p_aupr", "o_auroc", "o_aupr",
    "comparisons_per_query", "wall_seconds", "error",
)


@dataclass(frozen=True)
class SweepRow:
    k: int
    p_auroc: float | None
    p_aupr: float | None
    o_auroc: float | None
    o_aupr: float | None
    comparisons_per_query: float | None
    wall_seconds: float
    error: str = ""


@dataclass(frozen=True)
class SweepResult:
    rows: tuple

    def __post_init__(self):
        ks = [r.k for r in self.rows]
        if ks != sorted(ks):
            raise InvalidArgument("sweep rows must be sorted by k")


def run_sweep(cfg: RunConfig, data: SuiteData | None = None) -> SweepResult:
    from dataclasses import replace

    data = data or SuiteData(cfg)
    rows = []
    for k in sorted(cfg.sweep_ks):
        sub = replace(cfg, k=k, out_dir=os.path.join(cfg.out_dir, "sweep", f"k_{k:03d}"))
        started = time.perf_counter()
        try:
            banks = run_fit(sub, data)
            run_score(sub, data, banks)
            report = run_eval(sub, data)
            mean = report.mean_row()
            rows.append(
                SweepRow(
                    k=k,
                    p_auroc=mean["p_auroc"],
                    p_aupr=mean["p_aupr"],
                    o_auroc=mean["o_auroc"],
                    o_aupr=mean["o_aupr"],
                    comparisons_per_query=mean["comparisons_per_query"],
                    wall_seconds=time.perf_counter() - started,
                )
            )
        except Patch3DError as exc:
            rows.append(
                SweepRow(
                    k=k, p_auroc=None, p_aupr=None, o_auroc=None, o_aupr=None,
                    comparisons_per_query=None,
                    wall_seconds=time.perf_counter() - started,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
    result = SweepResult(rows=tuple(rows))
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_csv(
        os.path.join(cfg.out_dir, "sweep.csv"),
        SWEEP_COLUMNS,
        [
            (
                r.k,
                "" if r.p_auroc is None else r.p_auroc,
                "" if r.p_aupr is None else r.p_aupr,
                "" if r.o_auroc is None else r.o_auroc,
                "" if r.o_aupr is None else r.o_aupr,
                "" if r.comparisons_per_query is None else r.comparisons_per_query,
                r.wall_seconds,
                r.error,
            )
            for r in result.rows
        ],
    )
    good = [r for r in result.rows if not r.error]
    line_chart(
        [
            ("P-AUROC", [r.k for r in good], [r.p_auroc for r in good]),
            ("comparisons/query", [r.k for r in good], [r.comparisons_per_query for r in good]),
        ],
        os.path.join(cfg.out_dir, "sweep.svg"),
        title="Detection vs. semantic space count",
        x_label="k (semantic spaces)",
    )
    return result


def read_sweep_csv(path) -> list[dict]:
    header, rows = read_csv(path)
    out = []
    for cells in rows:
        rec: dict = {}
        for key, cell in zip(header, cells):
            if key == "error":
                rec[key] = cell
            elif key == "k":
                rec[key] = int(cell)
            else:
                rec[key] = None if cell == "" else float(cell)
        out.append(rec)
    return out


def run_bench(cfg: RunConfig, data: SuiteData | None = None) -> list[dict]:
    data = data or SuiteData(cfg)
    banks = run_fit(cfg, data)
    reports = run_score(cfg, data, banks)
    rows = []
    for cls in data.classes:
        preps = data.test[cls]
        reps = [reports[cls][p.name] for p in preps]
        n_points = sum(len(r.point_scores) for r in reps)
        rows.append(
            {
                "class": cls,
                "clouds": len(reps),
                "points": n_points,
                "feature_seconds_mean": float(np.mean([p.feature_seconds for p in preps])),
                "cut_seconds_mean": float(np.mean([r.cut_seconds for r in reps])),
                "query_seconds_mean": float(np.mean([r.query_seconds for r in reps])),
                "comparisons_per_query": sum(r.comparisons_made for r in reps) / n_points,
            }
        )
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_csv(
        os.path.join(cfg.out_dir, "bench.csv"),
        (
            "class", "clouds", "points", "feature_seconds_mean",
            "cut_seconds_mean", "query_seconds_mean", "comparisons_per_query",
        ),
        [tuple(r.values()) for r in rows],
    )
    return rows
