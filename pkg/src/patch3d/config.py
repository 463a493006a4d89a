"""Run configuration: flat key = value files plus CLI overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

from .errors import ConfigError
from .synth import SHAPE_KINDS

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class RunConfig:
    dataset_root: str = "dataset"
    out_dir: str = "out"
    k: int = 8
    delta: float = 1.5
    normal_k: int = 16
    feature_k: int = 16
    normalize: bool = True
    seed: int = 0
    # Synthetic suite layout.
    classes: tuple = SHAPE_KINDS
    n_points: int = 4096
    train_count: int = 4
    test_count: int = 20
    noise_sigma: float = 0.005
    amplitude_lo: float = 0.04
    amplitude_hi: float = 0.10
    region_radius: float = 0.2
    anomaly_fraction: float = 0.5
    anomaly_regions: int = 2  # injected regions per anomalous test cloud
    anomaly_sign: str = "bump"
    pose_jitter: bool = True  # random per-sample rotation/scale/offset in written files
    sweep_ks: tuple = (1, 2, 4, 8, 16)
    feature_shift: bool = True  # include descriptor shift stats in eval


def _parse_value(name: str, raw: str, target_type):
    raw = raw.strip()
    if target_type is bool:
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if target_type is tuple:
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if name == "sweep_ks":
            return tuple(int(s) for s in items)
        return tuple(items)
    return raw


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    by_name = {f.name: f for f in fields(RunConfig)}
    problems = []
    updates = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            problems.append(f"line {lineno}: expected key = value, got {stripped!r}")
            continue
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in by_name:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            updates[key] = _parse_value(key, raw, _field_type(by_name[key]))
        except ValueError as exc:
            problems.append(f"line {lineno}: {exc}")
    if problems:
        raise ConfigError(problems)
    return replace(cfg, **updates)


def _field_type(f):
    mapping = {"int": int, "float": float, "bool": bool, "str": str, "tuple": tuple}
    name = f.type if isinstance(f.type, str) else f.type.__name__
    return mapping.get(name, str)


def load_config(path: str, overrides: dict | None = None) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"config file: {exc}"]) from None
    cfg = parse_config_text(text)
    if overrides:
        cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    return cfg


def validate(cfg: RunConfig, require_dataset: bool = False) -> None:
    """Check every field; raises ConfigError listing all violations."""
    problems = []
    if cfg.k < 1:
        problems.append(f"k must be >= 1, got {cfg.k}")
    if not cfg.delta >= 1.0:
        problems.append(f"delta must be >= 1, got {cfg.delta}")
    if cfg.normal_k < 3:
        problems.append(f"normal_k must be >= 3, got {cfg.normal_k}")
    if cfg.feature_k < 1:
        problems.append(f"feature_k must be >= 1, got {cfg.feature_k}")
    if cfg.n_points < 100:
        problems.append(f"n_points must be >= 100, got {cfg.n_points}")
    if cfg.n_points < cfg.k:
        problems.append(f"k={cfg.k} exceeds n_points={cfg.n_points}")
    if cfg.train_count < 1:
        problems.append("train_count must be >= 1")
    if cfg.test_count < 1:
        problems.append("test_count must be >= 1")
    if cfg.noise_sigma < 0:
        problems.append("noise_sigma must be >= 0")
    if not 0 <= cfg.amplitude_lo <= cfg.amplitude_hi:
        problems.append("need 0 <= amplitude_lo <= amplitude_hi")
    if not 0 < cfg.region_radius < 1:
        problems.append("region_radius must be in (0, 1)")
    if not 0 <= cfg.anomaly_fraction <= 1:
        problems.append("anomaly_fraction must be in [0, 1]")
    if cfg.anomaly_regions < 1:
        problems.append("anomaly_regions must be >= 1")
    if cfg.anomaly_sign not in ("bump", "dent", "random"):
        problems.append(f"anomaly_sign invalid: {cfg.anomaly_sign!r}")
    unknown = [c for c in cfg.classes if c not in SHAPE_KINDS]
    if unknown:
        problems.append(f"unknown classes {unknown}; choose from {SHAPE_KINDS}")
    if not cfg.classes:
        problems.append("classes must be non-empty")
    if not cfg.sweep_ks or any(k < 1 for k in cfg.sweep_ks):
        problems.append(f"sweep_ks must be positive, got {cfg.sweep_ks}")
    if require_dataset and not os.path.isdir(cfg.dataset_root):
        problems.append(f"dataset_root does not exist: {cfg.dataset_root}")
    if problems:
        raise ConfigError(problems)


def worker_count() -> int:
    cap = os.environ.get("PATCH3D_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, n)
