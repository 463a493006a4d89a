"""Command line entry point.

    patch3d synth|fit|score|eval|sweep-k|bench --config FILE
            [--k N --delta X --seed S --out DIR]

Exit codes: 0 success, 2 config error, 3 data error, 4 pipeline error.
"""

from __future__ import annotations

import argparse
import sys

from . import pipeline
from .config import load_config, validate
from .errors import ConfigError, ParseError, Patch3DError
from .metrics import format_eval_text

_COMMANDS = ("synth", "fit", "score", "eval", "sweep-k", "bench")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_PIPELINE = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patch3d", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--k", type=int, default=None, help="semantic space count")
        p.add_argument("--delta", type=float, default=None, help="cluster size ratio cap")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--out", default=None, help="output directory")
    return parser


def run(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(
            args.config,
            overrides={
                "k": args.k,
                "delta": args.delta,
                "seed": args.seed,
                "out_dir": args.out,
            },
        )
        validate(cfg, require_dataset=args.command != "synth")
    except ConfigError as exc:
        for field in exc.fields:
            print(f"config error: {field}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "synth":
            pipeline.run_synth(cfg)
            print(f"dataset written to {cfg.dataset_root}")
        elif args.command == "fit":
            banks = pipeline.run_fit(cfg)
            for cls, b in banks.items():
                print(f"{cls}: banks {b.sizes.tolist()}")
        elif args.command == "score":
            reports = pipeline.run_score(cfg)
            for cls, by_sample in reports.items():
                worst = max(r.object_score for r in by_sample.values())
                print(f"{cls}: {len(by_sample)} samples scored, max object score {worst:.6g}")
        elif args.command == "eval":
            report = pipeline.run_eval(cfg)
            print(format_eval_text(report))
        elif args.command == "sweep-k":
            result = pipeline.run_sweep(cfg)
            for row in result.rows:
                if row.error:
                    print(f"k={row.k}: FAILED {row.error}")
                else:
                    print(
                        f"k={row.k}: P-AUROC {row.p_auroc:.4f}, "
                        f"comparisons/query {row.comparisons_per_query:.1f}"
                    )
        elif args.command == "bench":
            for row in pipeline.run_bench(cfg):
                print(
                    f"{row['class']}: features {row['feature_seconds_mean']:.3f}s, "
                    f"cut {row['cut_seconds_mean']:.3f}s, "
                    f"query {row['query_seconds_mean']:.3f}s per cloud"
                )
    except (ParseError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Patch3DError as exc:
        print(f"pipeline error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
