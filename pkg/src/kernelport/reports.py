"""Post-run reports over on-disk artifacts.

All reports are pure functions of the workdir contents: re-running a
report emits a byte-identical file and never mutates the workdir.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import MissingData
from .perfmodel import roofline_point, write_roofline_csv


class ReportKind(str, Enum):
    SUMMARY = "summary"
    TRAJECTORY = "trajectory"
    ROOFLINE = "roofline"
    COST = "cost"
    INVOCATIONS = "invocations"


class ReportFormat(str, Enum):
    CSV = "csv"
    JSON = "json"
    PLOT_DATA = "plot_data"


@dataclass(frozen=True)
class ReportRequest:
    kind: ReportKind
    workdir: Path
    output: Path
    format: ReportFormat = ReportFormat.CSV


def _read_summary(workdir: Path) -> list[dict]:
    path = workdir / "summary.csv"
    if not path.exists():
        raise MissingData(f"no summary CSV at {path}")
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def _read_versions(workdir: Path) -> list[dict]:
    records = []
    for vjson in sorted(workdir.glob("*.v*/version.json"),
                        key=lambda p: int(p.parent.name.rsplit(".v", 1)[1])):
        records.append(json.loads(vjson.read_text()))
    if not records:
        raise MissingData(f"no version directories under {workdir}")
    return records


def _emit(rows: list[dict], columns: list[str], req: ReportRequest) -> None:
    req.output.parent.mkdir(parents=True, exist_ok=True)
    if req.format is ReportFormat.CSV:
        with req.output.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
            writer.writeheader()
            writer.writerows(rows)
    elif req.format is ReportFormat.JSON:
        req.output.write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    else:  # plot_data: one series per numeric column, x = first column
        series = {
            col: [row.get(col) for row in rows] for col in columns
        }
        req.output.write_text(json.dumps(series, indent=2, sort_keys=True) + "\n")


def summary_report(req: ReportRequest) -> None:
    rows = _read_summary(req.workdir)
    columns = list(rows[0].keys()) if rows else []
    _emit(rows, columns, req)


def trajectory_report(req: ReportRequest) -> None:
    """GFLOPS at the largest size per version, ordered by version."""
    rows = [
        {"version": rec["version"], "gflops_at_max_n": rec["gflops_at_max_n"]}
        for rec in _read_versions(req.workdir)
    ]
    _emit(rows, ["version", "gflops_at_max_n"], req)


def invocations_report(req: ReportRequest) -> None:
    """Build/Run/Functionality attempt counts per version plus totals."""
    rows = []
    totals = {"build": 0, "run": 0, "functionality": 0}
    for rec in _read_versions(req.workdir):
        rows.append({
            "version": rec["version"],
            "build": rec["build_attempts"],
            "run": rec["run_attempts"],
            "functionality": rec["functionality_attempts"],
        })
        totals["build"] += rec["build_attempts"]
        totals["run"] += rec["run_attempts"]
        totals["functionality"] += rec["functionality_attempts"]
    rows.append({"version": "total", **totals})
    _emit(rows, ["version", "build", "run", "functionality"], req)


def cost_report(req: ReportRequest) -> None:
    """Token and cost totals from the structured trace log."""
    trace = req.workdir / "trace.jsonl"
    if not trace.exists():
        raise MissingData(f"no trace log at {trace}")
    per_role: dict[str, dict] = {}
    total = {"role": "total", "calls": 0, "input_tokens": 0, "output_tokens": 0, "cost_usd": 0.0}
    for line in trace.read_text().splitlines():
        record = json.loads(line)
        if record.get("event") != "agent":
            continue
        role = record["role"]
        bucket = per_role.setdefault(role, {
            "role": role, "calls": 0, "input_tokens": 0, "output_tokens": 0, "cost_usd": 0.0,
        })
        for tgt in (bucket, total):
            tgt["calls"] += 1
            tgt["input_tokens"] += record["input_tokens"]
            tgt["output_tokens"] += record["output_tokens"]
            tgt["cost_usd"] += record["cost_usd"]
    rows = [per_role[r] for r in sorted(per_role)] + [total]
    for row in rows:
        row["cost_usd"] = f"{row['cost_usd']:.6f}"
    _emit(rows, ["role", "calls", "input_tokens", "output_tokens", "cost_usd"], req)


def roofline_report(req: ReportRequest) -> None:
    """Roofline table from measured inputs.

    Reads `roofline_inputs.json` in the workdir: a list of entries with
    kernel, size, achieved_flops_per_s, arithmetic_intensity, and the
    machine's peak_flops_per_s and ridge_point.
    """
    inputs_path = req.workdir / "roofline_inputs.json"
    if not inputs_path.exists():
        raise MissingData(f"no roofline inputs at {inputs_path}")
    entries = json.loads(inputs_path.read_text())
    rows = []
    for entry in entries:
        point = roofline_point(
            entry["achieved_flops_per_s"],
            entry["arithmetic_intensity"],
            entry["peak_flops_per_s"],
            entry["ridge_point"],
        )
        rows.append((entry["kernel"], entry.get("size", ""), point))
    if req.format is ReportFormat.CSV:
        req.output.parent.mkdir(parents=True, exist_ok=True)
        write_roofline_csv(rows, req.output)
    else:
        payload = [
            {
                "kernel": kernel,
                "size": size,
                "achieved_flops_per_s": p.achieved_flops_per_s,
                "arithmetic_intensity": p.arithmetic_intensity,
                "percent_of_peak": round(p.percent_of_peak, 3),
                "bound_class": p.bound_class.value,
            }
            for kernel, size, p in rows
        ]
        req.output.parent.mkdir(parents=True, exist_ok=True)
        req.output.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


_DISPATCH = {
    ReportKind.SUMMARY: summary_report,
    ReportKind.TRAJECTORY: trajectory_report,
    ReportKind.ROOFLINE: roofline_report,
    ReportKind.COST: cost_report,
    ReportKind.INVOCATIONS: invocations_report,
}


def run_report(req: ReportRequest) -> None:
    _DISPATCH[req.kind](req)
