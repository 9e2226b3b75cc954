"""Turn raw profiler output into a plain-text diagnostic summary.

Report-style profilers (Nsight Compute style) emit advisory OPT blocks
that are parsed directly; counter-style profilers (rocprof style) emit
metric dumps that are screened against a threshold rule table shipped
as a data file (the defaults are placeholders meant to be tuned on real
hardware).
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Optional

SUMMARY_LINE_CAP = 20
NO_FINDINGS_TEXT = "no profiler findings"


@dataclass(frozen=True)
class OptPoint:
    kernel_loop: str
    advisory_text: str
    estimated_speedup: Optional[float] = None  # percent


@dataclass(frozen=True)
class MetricThresholdRule:
    metric_name: str
    comparator: str  # "<" or ">"
    threshold: float
    diagnostic_text: str

    def violated(self, value: float) -> bool:
        return value < self.threshold if self.comparator == "<" else value > self.threshold


class DiagnosticsSource(str, Enum):
    OPT_REPORT = "opt_report"
    METRIC_THRESHOLDS = "metric_thresholds"
    NONE = "none"


@dataclass(frozen=True)
class ProfileDiagnostics:
    source: DiagnosticsSource
    findings: tuple[str, ...]
    summary_text: str


@dataclass(frozen=True)
class OptGrammar:
    """Textual grammar of advisory blocks: a line whose first token is
    `opt_token` opens a block; the block runs until the next section
    marker or a pair of blank lines."""
    opt_token: str = "OPT"
    section_prefixes: tuple[str, ...] = ("Section:", "----", "====")
    speedup_pattern: str = r"speedup[^0-9%]*([0-9]+(?:\.[0-9]+)?)\s*%"


DEFAULT_GRAMMAR = OptGrammar()


def parse_opt_points(report_text: str, grammar: OptGrammar = DEFAULT_GRAMMAR) -> list[OptPoint]:
    """Extract advisory blocks from a report. Total: never raises;
    unparseable blocks are skipped."""
    points = []
    lines = report_text.splitlines()
    i = 0
    speedup_re = re.compile(grammar.speedup_pattern, re.IGNORECASE)
    while i < len(lines):
        tokens = lines[i].split()
        if not tokens or tokens[0].rstrip(":") != grammar.opt_token:
            i += 1
            continue
        block = [lines[i]]
        j = i + 1
        blanks = 0
        while j < len(lines):
            stripped = lines[j].strip()
            if any(stripped.startswith(p) for p in grammar.section_prefixes):
                break
            next_tokens = lines[j].split()
            if next_tokens and next_tokens[0].rstrip(":") == grammar.opt_token:
                break
            if not stripped:
                blanks += 1
                if blanks >= 2:
                    break
            else:
                blanks = 0
            block.append(lines[j])
            j += 1
        text = "\n".join(block).strip()
        advisory = text[len(tokens[0]):].strip() if text else ""
        if advisory:
            match = speedup_re.search(text)
            speedup = float(match.group(1)) if match else None
            points.append(OptPoint(
                kernel_loop=_guess_kernel_loop(text),
                advisory_text=advisory,
                estimated_speedup=speedup,
            ))
        i = j
    return points


_KERNEL_LOOP_RE = re.compile(
    r"(?:kernel|loop)\s+(?:['\"]([^'\"]+)['\"]|([\w:<>]+))", re.IGNORECASE)


def _guess_kernel_loop(block_text: str) -> str:
    match = _KERNEL_LOOP_RE.search(block_text)
    if not match:
        return ""
    return (match.group(1) or match.group(2) or "").strip()


def load_threshold_rules(path=None) -> list[MetricThresholdRule]:
    """Rule table from a JSON data file; defaults ship with the package."""
    if path is not None:
        raw = Path(path).read_text()
    else:
        raw = resources.files("kernelport.data").joinpath("metric_thresholds.json").read_text()
    return [MetricThresholdRule(**entry) for entry in json.loads(raw)]


def evaluate_thresholds(metrics: dict[str, float],
                        rules: list[MetricThresholdRule]) -> list[str]:
    """One finding per violated rule, in rule order, with the observed
    value interpolated into the rule's diagnostic text."""
    findings = []
    for rule in rules:
        if rule.metric_name in metrics and rule.violated(metrics[rule.metric_name]):
            findings.append(rule.diagnostic_text.format(value=metrics[rule.metric_name]))
    return findings


def synthesize_summary(points_or_findings, source: DiagnosticsSource,
                       line_cap: int = SUMMARY_LINE_CAP) -> ProfileDiagnostics:
    """Deterministic summary in input order, capped at `line_cap` lines."""
    findings = []
    for item in points_or_findings:
        if isinstance(item, OptPoint):
            line = item.advisory_text.replace("\n", " ").strip()
            if item.estimated_speedup is not None:
                line += f" [estimated speedup {item.estimated_speedup:g}%]"
            findings.append(line)
        else:
            findings.append(str(item))
    if not findings:
        return ProfileDiagnostics(source, (), NO_FINDINGS_TEXT)
    lines = [f"- {f}" for f in findings[:line_cap]]
    if len(findings) > line_cap:
        lines.append(f"(truncated: {len(findings) - line_cap} further findings omitted)")
    return ProfileDiagnostics(source, tuple(findings), "\n".join(lines))


def diagnostics_from_report(report_path, profiler_kind: str,
                            rules: Optional[list[MetricThresholdRule]] = None) -> ProfileDiagnostics:
    """Normalize a profiler artifact (OPT report text, or a JSON metric
    dump) into diagnostics for the optimizer."""
    if report_path is None:
        return ProfileDiagnostics(DiagnosticsSource.NONE, (), NO_FINDINGS_TEXT)
    path = Path(report_path)
    if not path.exists():
        return ProfileDiagnostics(DiagnosticsSource.NONE, (), NO_FINDINGS_TEXT)
    text = path.read_text()
    if profiler_kind == "ncu_like":
        return synthesize_summary(parse_opt_points(text), DiagnosticsSource.OPT_REPORT)
    if profiler_kind == "rocprof_like":
        try:
            metrics = {k: float(v) for k, v in json.loads(text).items()}
        except (json.JSONDecodeError, TypeError, ValueError, AttributeError):
            metrics = {}
        findings = evaluate_thresholds(metrics, rules or load_threshold_rules())
        return synthesize_summary(findings, DiagnosticsSource.METRIC_THRESHOLDS)
    return ProfileDiagnostics(DiagnosticsSource.NONE, (), NO_FINDINGS_TEXT)
