"""The ``forge`` command line.

Subcommands::

    forge run --input <dir> --out <dir> [--config file.json]
              [--stages parse,clean,...] [--seed N]
              [--ridge-threshold X] [--corr pearson|spearman]
    forge report <out dir>
    forge benchmark --input <dir> --out <dir> [--seed N] [--runs N]

Exit codes: 0 ok, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import imputation, pipeline
from .table import read_snapshot

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forge",
        description="Build a typed, cleaned, imputed country dataset "
        "from a World Factbook download.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_cmd = sub.add_parser("run", help="run pipeline stages")
    run_cmd.add_argument("--input", help="directory of per-entity json files")
    run_cmd.add_argument("--out", required=True, help="output directory")
    run_cmd.add_argument("--config", help="json config file")
    run_cmd.add_argument(
        "--stages", help="comma-separated subset of parse,clean,construct,encode,impute"
    )
    run_cmd.add_argument("--seed", type=int)
    run_cmd.add_argument("--ridge-threshold", type=float, dest="ridge_threshold")
    run_cmd.add_argument(
        "--corr", choices=("pearson", "spearman"), dest="correlation_method"
    )

    report_cmd = sub.add_parser("report", help="render a run report")
    report_cmd.add_argument("out_dir")

    bench_cmd = sub.add_parser(
        "benchmark", help="feature-selection method/threshold sweep"
    )
    bench_cmd.add_argument("--input", help="directory of per-entity json files")
    bench_cmd.add_argument("--out", required=True, help="output directory")
    bench_cmd.add_argument("--seed", type=int, default=0)
    bench_cmd.add_argument("--runs", type=int, default=10)
    return parser


def _cmd_run(args) -> int:
    config = (
        pipeline.PipelineConfig.from_file(args.config)
        if args.config
        else pipeline.PipelineConfig()
    )
    stages = tuple(args.stages.split(",")) if args.stages else None
    config = config.merged(
        input_dir=args.input,
        output_dir=args.out,
        stages=stages,
        seed=args.seed,
        ridge_threshold=args.ridge_threshold,
        correlation_method=args.correlation_method,
    )
    report = pipeline.run(config)
    print(pipeline.report_render(report))
    return 0


def _cmd_report(args) -> int:
    path = Path(args.out_dir) / "run_report.json"
    if not path.exists():
        raise pipeline.ConfigInvalidError(f"no run report at {path}")
    payload = json.loads(path.read_text(encoding="utf-8"))
    print(pipeline.report_render(payload))
    return 0


def _cmd_benchmark(args) -> int:
    out_dir = Path(args.out)
    v4_path = out_dir / "v4.csv"
    if not v4_path.exists():
        if not args.input:
            raise pipeline.ConfigInvalidError(
                f"{v4_path} not found and no --input given to build it"
            )
        config = pipeline.PipelineConfig(
            input_dir=args.input,
            output_dir=args.out,
            seed=args.seed,
            stages=("parse", "clean", "construct", "encode"),
        )
        pipeline.run(config)
    table = read_snapshot(v4_path)
    grid = imputation.benchmark_thresholds(
        table,
        runs=args.runs,
        cfg=imputation.ImputerConfig(seed=args.seed),
    )
    grid_path = out_dir / "benchmark_grid.csv"
    grid.write_csv(grid_path)
    for method in ("pearson", "spearman"):
        threshold, successes = grid.best_threshold(method)
        print(f"{method}: best threshold {threshold} with {successes} successes")
    print(f"all-complete baseline: {grid.baseline_successes} successes")
    print(f"grid written to {grid_path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            return _cmd_report(args)
        return _cmd_benchmark(args)
    except pipeline.ConfigInvalidError as exc:
        logger.error("%s", exc)
        return 2
    except pipeline.StageFailureError as exc:
        logger.error("%s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
