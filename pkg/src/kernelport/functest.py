"""Functional equivalence against the Fortran baseline.

A capture snippet is injected right after the program's single
synchronization anchor, both programs run across a sweep of sizes, and
their CSV outputs are compared under a tolerance. Pseudo-random kernels
(EP) use a non-zero check instead of elementwise comparison.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

from .errors import (
    AnchorAmbiguous,
    AnchorMissing,
    CsvParseError,
    LengthMismatch,
    MissingCsv,
    UnbalancedMarkers,
)
from .executors import TargetProfile, run_program

BEGIN_MARKER = "kernelport:capture-begin"
END_MARKER = "kernelport:capture-end"

DEFAULT_TOLERANCE = 1e-6


class CompareRule(str, Enum):
    ELEMENTWISE_TOL = "elementwise_tol"
    NONZERO = "nonzero"


@dataclass(frozen=True)
class InjectionSpec:
    kernel_id: str
    anchor: str                      # must occur exactly once in the source
    capture_snippet: str             # writes the result array to a CSV
    output_csv_name: str = "capture.csv"
    comment_prefix: str = "//"       # marker comment style of the target language
    rule: CompareRule = CompareRule.ELEMENTWISE_TOL
    tolerance: float = DEFAULT_TOLERANCE


@dataclass(frozen=True)
class FunctionalityReport:
    verdict: str                     # "pass" | "fail"
    per_size: tuple[tuple[int, float, bool], ...]  # (n, max_abs_diff, size_passed)
    tolerance: float
    rule: CompareRule
    sizes_tested: tuple[int, ...]

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "rule": self.rule.value,
            "sizes_tested": list(self.sizes_tested),
            "per_size": [
                {"n": n, "max_abs_diff": diff, "passed": ok}
                for n, diff, ok in self.per_size
            ],
        }


def inject_capture(source: str, spec: InjectionSpec) -> str:
    """Insert the capture snippet immediately after the anchor line,
    wrapped in begin/end marker comments."""
    count = source.count(spec.anchor)
    if count == 0:
        raise AnchorMissing(f"anchor {spec.anchor!r} not found")
    if count > 1:
        raise AnchorAmbiguous(f"anchor {spec.anchor!r} occurs {count} times")
    lines = source.split("\n")
    injected = []
    for line in lines:
        injected.append(line)
        if spec.anchor in line:
            injected.append(f"{spec.comment_prefix} {BEGIN_MARKER}")
            injected.extend(spec.capture_snippet.split("\n"))
            injected.append(f"{spec.comment_prefix} {END_MARKER}")
    return "\n".join(injected)


def strip_injection(source: str) -> str:
    """Remove injected capture blocks; inject/strip round-trips byte-for-byte."""
    lines = source.split("\n")
    kept = []
    inside = False
    for line in lines:
        if BEGIN_MARKER in line:
            if inside:
                raise UnbalancedMarkers("nested begin marker")
            inside = True
            continue
        if END_MARKER in line:
            if not inside:
                raise UnbalancedMarkers("end marker without begin")
            inside = False
            continue
        if not inside:
            kept.append(line)
    if inside:
        raise UnbalancedMarkers("begin marker without end")
    return "\n".join(kept)


_NUMBER_RE = re.compile(r"[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?")


def parse_numeric_csv(text: str) -> list[float]:
    """One value per line or comma-separated rows; scientific notation ok.
    Trailing whitespace and newline style do not affect the result."""
    values = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        for cell in line.split(","):
            cell = cell.strip()
            if not cell:
                continue
            try:
                values.append(float(cell))
            except ValueError as exc:
                raise CsvParseError(f"line {lineno}: {cell!r}") from exc
    return values


def compare_outputs(csv_a: str, csv_b: str, tolerance: float,
                    rule: CompareRule = CompareRule.ELEMENTWISE_TOL) -> tuple[bool, float]:
    """Elementwise max-abs-diff against a tolerance, or the non-zero rule
    (any nonzero value in the candidate output passes)."""
    a = parse_numeric_csv(csv_a)
    if rule is CompareRule.NONZERO:
        max_abs = max((abs(x) for x in a), default=0.0)
        return max_abs > 0.0, max_abs
    b = parse_numeric_csv(csv_b)
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} values vs {len(b)}")
    max_diff = max((abs(x - y) for x, y in zip(a, b)), default=0.0)
    return max_diff <= tolerance, max_diff


def sweep_sizes(n_min: int, n_max: int, count: int = 3) -> list[int]:
    """A small sweep of sizes spaced across [n_min, n_max]."""
    if count < 1 or n_min > n_max:
        raise ValueError("need count >= 1 and n_min <= n_max")
    if count == 1 or n_min == n_max:
        return [n_min]
    step = (n_max - n_min) / (count - 1)
    sizes = []
    for i in range(count):
        n = round(n_min + i * step)
        if not sizes or n != sizes[-1]:
            sizes.append(n)
    return sizes


def _read_capture(run_dir: Path, csv_name: str) -> str:
    path = run_dir / csv_name
    if not path.exists():
        raise MissingCsv(str(path))
    return path.read_text()


def run_equivalence(instrumented_exe, baseline_exe, sizes, reps: int,
                    target: TargetProfile, spec: InjectionSpec,
                    workdir, baseline_run_template: Optional[str] = None) -> FunctionalityReport:
    """Run candidate and baseline at each size (profiling disabled) and
    compare their capture CSVs under the spec's rule."""
    if not sizes:
        raise ValueError("sizes must be non-empty")
    workdir = Path(workdir)
    baseline_target = target
    if baseline_run_template:
        baseline_target = _with_run_template(target, baseline_run_template)
    per_size = []
    all_ok = True
    for n in sizes:
        cand_dir = workdir / f"func_n{n}" / "candidate"
        base_dir = workdir / f"func_n{n}" / "baseline"
        run_program(instrumented_exe, n, reps, False, target, cwd=cand_dir)
        csv_a = _read_capture(cand_dir, spec.output_csv_name)
        if spec.rule is CompareRule.NONZERO:
            ok, diff = compare_outputs(csv_a, "", spec.tolerance, spec.rule)
        else:
            run_program(baseline_exe, n, reps, False, baseline_target, cwd=base_dir)
            csv_b = _read_capture(base_dir, spec.output_csv_name)
            ok, diff = compare_outputs(csv_a, csv_b, spec.tolerance, spec.rule)
        per_size.append((n, diff, ok))
        all_ok = all_ok and ok
    return FunctionalityReport(
        verdict="pass" if all_ok else "fail",
        per_size=tuple(per_size),
        tolerance=spec.tolerance,
        rule=spec.rule,
        sizes_tested=tuple(sizes),
    )


def _with_run_template(target: TargetProfile, run_template: str) -> TargetProfile:
    from dataclasses import replace
    return replace(target, run_command_template=run_template)
