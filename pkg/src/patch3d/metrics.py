"""Detection metrics, partition quality, and distribution diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import rankdata

from .errors import InvalidArgument, UndefinedMetric

HUNGARIAN_MAX_K = 64


def _scores_labels(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    if s.shape != y.shape:
        raise InvalidArgument("scores and labels must have the same length")
    return s, y


def auroc(scores, labels) -> float:
    """Probability a random positive outscores a random negative (ties 1/2)."""
    s, y = _scores_labels(scores, labels)
    pos = int(y.sum())
    neg = len(y) - pos
    if pos == 0 or neg == 0:
        raise UndefinedMetric("AUROC needs both classes")
    ranks = rankdata(s, method="average")
    u = ranks[y].sum() - pos * (pos + 1) / 2.0
    return float(u / (pos * neg))


def aupr(scores, labels) -> float:
    """Area under precision-recall, step-wise (no interpolation).

    Sweeps the thresholds induced by distinct score values, descending;
    area accumulates precision * recall-increment per threshold.
    """
    s, y = _scores_labels(scores, labels)
    pos = int(y.sum())
    if pos == 0:
        raise UndefinedMetric("AUPR needs at least one positive")
    order = np.argsort(-s, kind="stable")
    y_sorted = y[order]
    s_sorted = s[order]
    tp = np.cumsum(y_sorted)
    predicted = np.arange(1, len(s) + 1)
    # Threshold boundaries: the last entry of each run of equal scores.
    boundary = np.flatnonzero(np.diff(s_sorted) != 0)
    boundary = np.append(boundary, len(s) - 1)
    precision = tp[boundary] / predicted[boundary]
    recall = tp[boundary] / pos
    prev = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev) * precision))


@dataclass(frozen=True)
class PartitionAccuracy:
    value: float
    exact: bool  # False when the greedy fallback replaced the optimal matching


def partition_accuracy(predicted, true, max_exact_k: int = HUNGARIAN_MAX_K) -> PartitionAccuracy:
    """Best label-bijection agreement between two clusterings.

    Optimal assignment on the confusion matrix for up to max_exact_k
    clusters; a greedy matching (largest cells first) handles anything
    bigger and is flagged non-exact.
    """
    p = np.asarray(predicted, dtype=np.intp).ravel()
    t = np.asarray(true, dtype=np.intp).ravel()
    if p.shape != t.shape or len(p) == 0:
        raise InvalidArgument("label vectors must be non-empty and equal length")
    k = int(max(p.max(), t.max())) + 1
    conf = np.zeros((k, k), dtype=np.int64)
    np.add.at(conf, (p, t), 1)
    if k <= max_exact_k:
        rows, cols = linear_sum_assignment(conf, maximize=True)
        return PartitionAccuracy(float(conf[rows, cols].sum() / len(p)), True)
    flat = np.argsort(-conf, axis=None, kind="stable")
    used_r: set[int] = set()
    used_c: set[int] = set()
    total = 0
    for f in flat:
        r, c = divmod(int(f), k)
        if r not in used_r and c not in used_c:
            used_r.add(r)
            used_c.add(c)
            total += int(conf[r, c])
            if len(used_r) == k:
                break
    return PartitionAccuracy(float(total / len(p)), False)


def shift_stats(train, test) -> tuple[float, float]:
    """Mean absolute per-dimension gap in means and population variances."""
    a = np.atleast_2d(np.asarray(train, dtype=np.float64))
    b = np.atleast_2d(np.asarray(test, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise InvalidArgument("shift_stats needs non-empty inputs")
    if a.shape[1] != b.shape[1]:
        raise InvalidArgument("dimension mismatch")
    mean_diff = float(np.mean(np.abs(a.mean(axis=0) - b.mean(axis=0))))
    var_diff = float(np.mean(np.abs(a.var(axis=0) - b.var(axis=0))))
    return mean_diff, var_diff


@dataclass(frozen=True)
class BankPairDiag:
    i: int
    j: int
    cross_trace: float  # normalized second-moment overlap, 0 = orthogonal
    min_distance: float


def orthogonality_diag(banks) -> list[BankPairDiag]:
    """Cross-bank interference diagnostics for every bank pair.

    cross_trace is tr(C_i C_j) / (|C_i|_F |C_j|_F) with C the covariance of
    a bank's rows about its own mean: the average squared inner product of
    centered members, normalized. min_distance is the smallest L2 distance
    between any member of bank i and any member of bank j. Reported only;
    real feature banks are never exactly orthogonal.
    """
    mats = [np.asarray(b, dtype=np.float64) for b in getattr(banks, "banks", banks)]
    if len(mats) < 2:
        raise InvalidArgument("need at least two banks")
    covs = []
    for b in mats:
        centered = b - b.mean(axis=0, keepdims=True)
        covs.append(centered.T @ centered / len(b))
    norms = [float(np.linalg.norm(c)) for c in covs]
    out = []
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            denom = norms[i] * norms[j]
            trace = float(np.sum(covs[i] * covs[j]) / denom) if denom > 0 else 0.0
            out.append(
                BankPairDiag(i, j, trace, _min_cross_distance(mats[i], mats[j]))
            )
    return out


EVAL_COLUMNS = (
    "class", "o_auroc", "o_aupr", "p_auroc", "p_aupr", "ac", "nub",
    "coord_shift_raw_mean", "coord_shift_raw_var",
    "coord_shift_norm_mean", "coord_shift_norm_var",
    "fpfh_shift_mean", "fpfh_shift_var", "comparisons_per_query",
)


@dataclass(frozen=True)
class EvalClassRow:
    name: str
    o_auroc: float
    o_aupr: float
    p_auroc: float
    p_aupr: float
    ac: float | None
    nub: int
    coord_shift_raw_mean: float
    coord_shift_raw_var: float
    coord_shift_norm_mean: float
    coord_shift_norm_var: float
    fpfh_shift_mean: float | None
    fpfh_shift_var: float | None
    comparisons_per_query: float

    def numeric_fields(self):
        return {c: getattr(self, "name" if c == "class" else c) for c in EVAL_COLUMNS}


@dataclass(frozen=True)
class EvalReport:
    rows: tuple

    def mean_row(self) -> dict:
        out: dict = {"class": "mean"}
        for col in EVAL_COLUMNS[1:]:
            vals = [getattr(r, col) for r in self.rows if getattr(r, col) is not None]
            out[col] = float(np.mean(vals)) if vals else None
        return out


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_eval_csv(report: EvalReport, path) -> None:
    lines = [",".join(EVAL_COLUMNS)]
    for row in list(report.rows) + [None]:
        record = report.mean_row() if row is None else row.numeric_fields()
        lines.append(",".join(_fmt(record[c]) for c in EVAL_COLUMNS))
    with open(str(path), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_eval_csv(path) -> list[dict]:
    """Parse eval.csv back into typed dicts (floats, None for blanks)."""
    with open(str(path), "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = lines[0].split(",")
    out = []
    for line in lines[1:]:
        cells = line.split(",")
        rec: dict = {}
        for key, cell in zip(header, cells):
            if key == "class":
                rec[key] = cell
            elif cell == "":
                rec[key] = None
            else:
                rec[key] = float(cell)
        out.append(rec)
    return out


def format_eval_text(report: EvalReport) -> str:
    cols = ("class", "o_auroc", "o_aupr", "p_auroc", "p_aupr", "comparisons_per_query")
    widths = {c: max(len(c), 14) for c in cols}
    head = "  ".join(c.ljust(widths[c]) for c in cols)
    rule = "-" * len(head)
    body = []
    for row in list(report.rows) + [None]:
        record = report.mean_row() if row is None else row.numeric_fields()
        cells = []
        for c in cols:
            v = record[c]
            cells.append((v if isinstance(v, str) else f"{v:.4f}").ljust(widths[c]))
        body.append("  ".join(cells))
    return "\n".join([head, rule] + body)


def _min_cross_distance(a: np.ndarray, b: np.ndarray, block: int = 2048) -> float:
    best = np.inf
    b_norm2 = np.einsum("ij,ij->i", b, b)
    for lo in range(0, len(a), block):
        chunk = a[lo : lo + block]
        d2 = (
            np.einsum("ij,ij->i", chunk, chunk)[:, None]
            - 2.0 * chunk @ b.T
            + b_norm2[None, :]
        )
        idx = np.unravel_index(np.argmin(d2), d2.shape)
        exact = float(np.sum((chunk[idx[0]] - b[idx[1]]) ** 2))
        # Re-check candidates the expansion may have mis-ranked.
        close = d2 <= d2[idx] + 1e-6 * max(1.0, abs(float(d2[idx])))
        for r, c in zip(*np.nonzero(close)):
            exact = min(exact, float(np.sum((chunk[r] - b[c]) ** 2)))
        best = min(best, exact)
    return float(np.sqrt(max(best, 0.0)))
