"""Command-line entry points.

    kernelport run --config pipeline.yaml
    kernelport report --kind trajectory --workdir runs/cg --out traj.csv --format csv

Exit codes: 0 success, 2 invalid config, 3 provider unavailable
(including replay misses), 4 fix budget exhausted, 5 infrastructure
failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_run_config
from .errors import (
    BudgetExhausted,
    ConfigInvalid,
    ExecutorFailure,
    MissingData,
    ProviderUnavailable,
)
from .pipeline import run_pipeline
from .reports import ReportFormat, ReportKind, ReportRequest, run_report

EXIT_OK = 0
EXIT_CONFIG_INVALID = 2
EXIT_PROVIDER_UNAVAILABLE = 3
EXIT_BUDGET_EXHAUSTED = 4
EXIT_INFRASTRUCTURE = 5


def cmd_run(config_path: str) -> int:
    try:
        run_cfg = load_run_config(config_path)
    except ConfigInvalid as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG_INVALID
    if not run_cfg.fortran_source_path.exists():
        print(f"fortran source not found: {run_cfg.fortran_source_path}", file=sys.stderr)
        return EXIT_CONFIG_INVALID
    fortran_source = run_cfg.fortran_source_path.read_text()
    try:
        agents = run_cfg.build_agents()
        result = run_pipeline(
            run_cfg.pipeline, fortran_source,
            target=run_cfg.target, agents=agents, injection=run_cfg.injection,
            baseline_run_template=run_cfg.baseline_run_template,
        )
    except BudgetExhausted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_BUDGET_EXHAUSTED
    except ProviderUnavailable as exc:
        print(f"provider unavailable: {exc}", file=sys.stderr)
        return EXIT_PROVIDER_UNAVAILABLE
    except ExecutorFailure as exc:
        print(f"infrastructure failure: {exc}", file=sys.stderr)
        return EXIT_INFRASTRUCTURE
    print(f"completed {len(result.versions)} versions; summary at {result.summary_csv}")
    return EXIT_OK


def cmd_report(kind: str, workdir: str, out: str, fmt: str) -> int:
    try:
        req = ReportRequest(
            kind=ReportKind(kind),
            workdir=Path(workdir),
            output=Path(out),
            format=ReportFormat(fmt),
        )
    except ValueError as exc:
        print(f"invalid report request: {exc}", file=sys.stderr)
        return EXIT_CONFIG_INVALID
    try:
        run_report(req)
    except MissingData as exc:
        print(f"missing data: {exc}", file=sys.stderr)
        return EXIT_INFRASTRUCTURE
    print(f"wrote {req.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernelport")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the full pipeline for one kernel")
    run_p.add_argument("--config", required=True, help="path to the YAML run config")

    rep_p = sub.add_parser("report", help="emit a report over a finished run")
    rep_p.add_argument("--kind", required=True,
                       choices=[k.value for k in ReportKind])
    rep_p.add_argument("--workdir", required=True)
    rep_p.add_argument("--out", required=True)
    rep_p.add_argument("--format", default="csv",
                       choices=[f.value for f in ReportFormat])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config)
    return cmd_report(args.kind, args.workdir, args.out, args.format)


if __name__ == "__main__":
    sys.exit(main())
