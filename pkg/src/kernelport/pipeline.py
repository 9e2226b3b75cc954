"""The orchestrating state machine.

One kernel run is strictly sequential: translate, validate, build, run,
functionality-test, then a bounded number of optimization rounds, each
building on the immediately preceding version. Fix budgets bound every
repair loop; exhausting any budget aborts the whole kernel run. Every
version lands in its own numbered directory and completed versions are
appended to a summary CSV.
"""
from __future__ import annotations

import fcntl
import json
import re
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional

from . import perfmodel
from .errors import BudgetExhausted, ConfigInvalid, ExecutorFailure, IoFailure, NoChangeProduced
from .executors import JobOutcome, ProfilerKind, TargetProfile, build_program, compile_baseline, run_program
from .functest import CompareRule, FunctionalityReport, InjectionSpec, inject_capture, run_equivalence, strip_injection, sweep_sizes
from .profiling import NO_FINDINGS_TEXT, ProfileDiagnostics, DiagnosticsSource, diagnostics_from_report
from .roles import Agents, Role

VALIDATION_FIX_BUDGET = 3  # structural/validity repairs before giving up


class SizeSpacing(str, Enum):
    UNIFORM = "uniform"
    LOGARITHMIC = "logarithmic"


#: Default sweep/iteration settings per kernel (min_n, max_n, num_sizes,
#: iteration range).
DEFAULT_RUNTIME_SETTINGS = {
    "CG": (1000, 1_000_000, 10, (10, 10)),
    "EP": (18, 28, 5, (2, 5)),
    "MG": (32, 256, 10, (2, 10)),
    "FT": (32, 128, 5, (2, 5)),
    "DGEMM": (1024, 8192, 5, (2, 5)),
}


@dataclass(frozen=True)
class PipelineConfig:
    kernel_id: str
    target_id: str
    model_ref: str
    workdir: Path
    min_n: int
    max_n: int
    num_sizes: int = 3
    size_spacing: SizeSpacing = SizeSpacing.UNIFORM
    program_iterations: tuple[int, int] = (2, 5)
    kernel_repetitions: int = 10
    max_compile_fixes: int = 20
    max_runtime_fixes: int = 20
    max_functionality_fixes: int = 10
    max_optimization_rounds: int = 5
    func_sweep_count: int = 3

    def __post_init__(self):
        budgets = {
            "max_compile_fixes": self.max_compile_fixes,
            "max_runtime_fixes": self.max_runtime_fixes,
            "max_functionality_fixes": self.max_functionality_fixes,
            "max_optimization_rounds": self.max_optimization_rounds,
        }
        for name, value in budgets.items():
            if value < 1:
                raise ConfigInvalid(f"{name} must be >= 1, got {value}")
        if self.min_n < 1 or self.min_n > self.max_n:
            raise ConfigInvalid(f"need 1 <= min_n <= max_n, got {self.min_n}..{self.max_n}")
        if self.num_sizes < 1:
            raise ConfigInvalid("num_sizes must be >= 1")
        if self.kernel_repetitions < 1:
            raise ConfigInvalid("kernel_repetitions must be >= 1")
        if self.program_iterations[0] > self.program_iterations[1]:
            raise ConfigInvalid("program_iterations range is inverted")
        object.__setattr__(self, "workdir", Path(self.workdir))

    def sizes(self) -> list[int]:
        """Sweep sizes, uniformly or logarithmically spaced over
        [min_n, max_n]; duplicates collapse for narrow ranges."""
        if self.num_sizes == 1 or self.min_n == self.max_n:
            return [self.min_n]
        out: list[int] = []
        for i in range(self.num_sizes):
            frac = i / (self.num_sizes - 1)
            if self.size_spacing is SizeSpacing.LOGARITHMIC:
                n = round(self.min_n * (self.max_n / self.min_n) ** frac)
            else:
                n = round(self.min_n + frac * (self.max_n - self.min_n))
            if not out or n != out[-1]:
                out.append(n)
        out[-1] = self.max_n
        return out

    def iteration_policy(self) -> perfmodel.IterationPolicy:
        default = perfmodel.DEFAULT_ITERATION_POLICIES.get(self.kernel_id.upper())
        if default is not None:
            return replace(default, iter_min=self.program_iterations[0],
                           iter_max=self.program_iterations[1])
        return perfmodel.IterationPolicy(
            self.kernel_id, perfmodel.ScalingPolicy.FIXED_CAP,
            self.program_iterations[0], self.program_iterations[1])


class VersionStatus(str, Enum):
    TRANSLATED = "translated"
    VALIDATED = "validated"
    BUILT = "built"
    RAN = "ran"
    TESTED_OK = "tested_ok"
    TESTED_FAILED = "tested_failed"
    ABORTED = "aborted"


@dataclass
class CodeVersion:
    version: int
    source_path: Path
    status: VersionStatus = VersionStatus.TRANSLATED
    build_attempts: int = 0
    run_attempts: int = 0
    functionality_attempts: int = 0
    runtimes: dict[int, float] = field(default_factory=dict)
    gflops_at_max_n: float = 0.0
    parent_version: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "source_path": str(self.source_path),
            "status": self.status.value,
            "build_attempts": self.build_attempts,
            "run_attempts": self.run_attempts,
            "functionality_attempts": self.functionality_attempts,
            "runtimes": {str(k): v for k, v in self.runtimes.items()},
            "gflops_at_max_n": self.gflops_at_max_n,
            "parent_version": self.parent_version,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CodeVersion":
        return cls(
            version=data["version"],
            source_path=Path(data["source_path"]),
            status=VersionStatus(data["status"]),
            build_attempts=data["build_attempts"],
            run_attempts=data["run_attempts"],
            functionality_attempts=data["functionality_attempts"],
            runtimes={int(k): v for k, v in data["runtimes"].items()},
            gflops_at_max_n=data["gflops_at_max_n"],
            parent_version=data["parent_version"],
        )


class VersionStore:
    """Numbered per-version directories `<kernel>.v<K>`, K contiguous from 1."""

    _DIR_RE = re.compile(r"\.v(\d+)$")

    def __init__(self, root, kernel_id: str):
        self.root = Path(root)
        self.kernel_id = kernel_id
        self.root.mkdir(parents=True, exist_ok=True)

    def version_dirs(self) -> list[tuple[int, Path]]:
        found = []
        for child in self.root.iterdir():
            if child.is_dir() and child.name.startswith(f"{self.kernel_id}.v"):
                match = self._DIR_RE.search(child.name)
                if match:
                    found.append((int(match.group(1)), child))
        return sorted(found)

    def next_version(self) -> tuple[int, Path]:
        """Create the next version directory; numbers are never reused."""
        lock_path = self.root / ".store.lock"
        with lock_path.open("w") as lock:
            fcntl.flock(lock, fcntl.LOCK_EX)
            existing = self.version_dirs()
            k = existing[-1][0] + 1 if existing else 1
            path = self.root / f"{self.kernel_id}.v{k}"
            try:
                path.mkdir(parents=False, exist_ok=False)
            except OSError as exc:
                raise IoFailure(f"cannot create {path}: {exc}") from exc
        return k, path


@dataclass(frozen=True)
class RunSummaryRow:
    kernel_id: str
    model_ref: str
    target_id: str
    version: int
    runtimes: dict[int, float]
    build_fixes: int
    run_fixes: int
    func_fixes: int
    input_tokens: int
    output_tokens: int
    cost_usd: float
    elapsed_wall_seconds: float


def summary_header(sizes: list[int]) -> list[str]:
    return (
        ["kernel", "model", "target", "version"]
        + [f"runtime_n{n}" for n in sizes]
        + ["build_fixes", "run_fixes", "func_fixes",
           "input_tokens", "output_tokens", "cost_usd", "elapsed_s"]
    )


def append_summary_row(row: RunSummaryRow, csv_path, sizes: list[int]) -> None:
    """Append one row; the header is written exactly once. The file is
    held under an exclusive lock during mutation."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    fields = [row.kernel_id, row.model_ref, row.target_id, str(row.version)]
    for n in sizes:
        rt = row.runtimes.get(n)
        fields.append(f"{rt:.6f}" if rt is not None else "")
    fields += [
        str(row.build_fixes), str(row.run_fixes), str(row.func_fixes),
        str(row.input_tokens), str(row.output_tokens),
        f"{row.cost_usd:.2f}", f"{row.elapsed_wall_seconds:.3f}",
    ]
    try:
        with csv_path.open("a") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            if fh.tell() == 0:
                fh.write(",".join(summary_header(sizes)) + "\n")
            fh.write(",".join(fields) + "\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


@dataclass
class PipelineResult:
    versions: list[CodeVersion]
    summary_rows: list[RunSummaryRow]
    summary_csv: Path


class Pipeline:
    """Runs one kernel through the full workflow against one target."""

    def __init__(self, cfg: PipelineConfig, target: TargetProfile, agents: Agents,
                 injection: InjectionSpec, baseline_run_template: Optional[str] = None):
        self.cfg = cfg
        self.target = target
        self.agents = agents
        self.injection = injection
        self.baseline_run_template = baseline_run_template
        self.workdir = Path(cfg.workdir)
        self.store = VersionStore(self.workdir, cfg.kernel_id)
        self.summary_csv = self.workdir / "summary.csv"
        self.trace_path = self.workdir / "trace.jsonl"
        self._current_version = 0
        self._baseline_exe: Optional[Path] = None

    # --- tracing ---

    def _trace(self, record: dict) -> None:
        record = {"version": self._current_version, **record}
        with self.trace_path.open("a") as fh:
            fh.write(json.dumps(record) + "\n")

    def _trace_job(self, outcome: JobOutcome, stage: str) -> None:
        self._trace({
            "event": "job",
            "stage": stage,
            "kind": outcome.kind.value,
            "exit_status": outcome.exit_status,
            "stdout": str(outcome.stdout_path),
            "stderr": str(outcome.stderr_path),
        })

    # --- lifecycle ---

    def run(self, fortran_source: str) -> PipelineResult:
        if not fortran_source.strip():
            raise ValueError("fortran_source must be non-empty")
        self.workdir.mkdir(parents=True, exist_ok=True)
        self._cleanup()
        self.agents.gateway.trace_hook = self._trace
        fortran_path = self.workdir / "baseline.f90"
        fortran_path.write_text(fortran_source)

        versions: list[CodeVersion] = []
        rows: list[RunSummaryRow] = []
        prev_source: Optional[str] = None
        prev_diag = ProfileDiagnostics(DiagnosticsSource.NONE, (), NO_FINDINGS_TEXT)
        total_versions = 1 + self.cfg.max_optimization_rounds
        try:
            for k in range(1, total_versions + 1):
                number, vdir = self.store.next_version()
                self._current_version = number
                started = time.monotonic()
                usage_before, cost_before = self.agents.gateway.ledger.snapshot()
                cv = CodeVersion(version=number, source_path=vdir / "source.cpp",
                                 parent_version=number - 1 if number > 1 else None)
                versions.append(cv)
                self._attach_transcript_sink(vdir)
                try:
                    if k == 1:
                        source = self.agents.translate(fortran_source, self.cfg.kernel_id)
                    else:
                        source = self.agents.optimize(prev_source, prev_diag.summary_text)
                    source = self._validate_stage(source, cv, full=(k == 1))
                    cv.status = VersionStatus.VALIDATED
                    cv.source_path.write_text(source)
                    exe = self._build_stage(cv, vdir)
                    cv.status = VersionStatus.BUILT
                    source, exe, profile_report = self._run_stage(cv, vdir, exe, source)
                    cv.status = VersionStatus.RAN
                    source = self._functionality_stage(cv, vdir, exe, source,
                                                       fortran_source, fortran_path)
                    cv.status = VersionStatus.TESTED_OK
                    cv.source_path.write_text(source)
                    self._score(cv)
                    diag = diagnostics_from_report(
                        profile_report, self.target.profiler.value)
                    (vdir / "profile_summary.txt").write_text(diag.summary_text + "\n")
                finally:
                    (vdir / "version.json").write_text(json.dumps(cv.to_dict(), indent=2))

                usage_after, cost_after = self.agents.gateway.ledger.snapshot()
                row = RunSummaryRow(
                    kernel_id=self.cfg.kernel_id,
                    model_ref=self.cfg.model_ref,
                    target_id=self.cfg.target_id,
                    version=number,
                    runtimes=dict(cv.runtimes),
                    build_fixes=cv.build_attempts - 1,
                    run_fixes=cv.run_attempts - 1,
                    func_fixes=cv.functionality_attempts - 1,
                    input_tokens=usage_after.input_tokens - usage_before.input_tokens,
                    output_tokens=usage_after.output_tokens - usage_before.output_tokens,
                    cost_usd=cost_after - cost_before,
                    elapsed_wall_seconds=time.monotonic() - started,
                )
                append_summary_row(row, self.summary_csv, self.cfg.sizes())
                rows.append(row)
                prev_source, prev_diag = source, diag
        except BudgetExhausted:
            if versions:
                versions[-1].status = VersionStatus.ABORTED
                vdir = self.workdir / f"{self.cfg.kernel_id}.v{versions[-1].version}"
                (vdir / "version.json").write_text(
                    json.dumps(versions[-1].to_dict(), indent=2))
            raise
        finally:
            self._cleanup()
        return PipelineResult(versions, rows, self.summary_csv)

    def _attach_transcript_sink(self, vdir: Path) -> None:
        tdir = vdir / "transcripts"
        tdir.mkdir(exist_ok=True)
        counter = {"n": 0}

        def sink(role: str, system: str, user: str, result) -> None:
            counter["n"] += 1
            (tdir / f"{counter['n']:03d}_{role}.json").write_text(json.dumps({
                "role": role,
                "system": system,
                "user": user,
                "response": result.text,
                "input_tokens": result.usage.input_tokens,
                "output_tokens": result.usage.output_tokens,
            }, indent=2, ensure_ascii=False))

        self.agents.transcript_sink = sink

    def _cleanup(self) -> None:
        """Remove scratch state so repeated runs stay isolated."""
        scratch = self.workdir / "scratch"
        if scratch.exists():
            import shutil
            shutil.rmtree(scratch, ignore_errors=True)

    # --- stages ---

    def _validate_stage(self, source: str, cv: CodeVersion, full: bool) -> str:
        """Structural (plus, for the baseline translation, model) validity
        check with a small repair loop."""
        fixes = 0
        while True:
            verdict = self.agents.validate(source, structural_only=not full)
            if verdict.is_valid:
                return source
            if fixes >= VALIDATION_FIX_BUDGET:
                raise BudgetExhausted("validate", cv.version, VALIDATION_FIX_BUDGET)
            try:
                source = self.agents.fix(Role.VALIDATION_FIXER, source,
                                         "\n".join(verdict.issues))
            except NoChangeProduced:
                pass
            fixes += 1

    def _build_stage(self, cv: CodeVersion, vdir: Path) -> Path:
        """Compile loop bounded by max_compile_fixes; each fix attempt may
        trigger one rebuild."""
        fixes = 0
        exe = vdir / "program.x"
        while True:
            cv.build_attempts += 1
            outcome = build_program(cv.source_path, self.target, exe_path=exe)
            self._trace_job(outcome, "build")
            if outcome.ok:
                return exe
            if fixes >= self.cfg.max_compile_fixes:
                raise BudgetExhausted("compile", cv.version, self.cfg.max_compile_fixes)
            stderr = outcome.stderr_path.read_text() or "(empty compiler log)"
            diagnosis = self.agents.summarize_error(stderr)
            fixes += 1
            try:
                fixed = self.agents.fix(Role.COMPILE_ERROR_FIXER,
                                        cv.source_path.read_text(), diagnosis)
                cv.source_path.write_text(fixed)
            except NoChangeProduced:
                pass  # burns a fix attempt; the rebuild will fail again

    def _rebuild_internal(self, cv: CodeVersion, vdir: Path) -> JobOutcome:
        """Re-compile after a runtime/functionality fix. Not a Build-stage
        invocation, so it does not count against build_attempts."""
        outcome = build_program(cv.source_path, self.target,
                                exe_path=vdir / "program.x", log_stem="rebuild")
        self._trace_job(outcome, "rebuild")
        return outcome

    def _run_stage(self, cv: CodeVersion, vdir: Path, exe: Path, source: str):
        """Run the full size sweep; profiling wraps the largest size when
        the target has a profiler. Runtime failures go through the error
        summarizer and the runtime fixer, bounded by max_runtime_fixes."""
        sizes = self.cfg.sizes()
        max_n = sizes[-1]
        fixes = 0
        while True:
            cv.run_attempts += 1
            failure: Optional[str] = None
            profile_report = None
            runtimes: dict[int, float] = {}
            for n in sizes:
                profile = (n == max_n and self.target.profiler is not ProfilerKind.NONE)
                outcome = run_program(exe, n, self.cfg.kernel_repetitions, profile,
                                      self.target, cwd=vdir)
                self._trace_job(outcome, "run")
                if not outcome.ok:
                    failure = outcome.stderr_path.read_text() or f"exit status {outcome.exit_status} at n={n}"
                    break
                if outcome.parsed_runtime is None:
                    failure = (f"no runtime value on stdout at n={n}; "
                               f"expected a decimal with six fractional digits")
                    break
                runtimes[n] = outcome.parsed_runtime
                if profile:
                    profile_report = outcome.profiler_report_path
            if failure is None:
                cv.runtimes = runtimes
                return source, exe, profile_report
            if fixes >= self.cfg.max_runtime_fixes:
                raise BudgetExhausted("runtime", cv.version, self.cfg.max_runtime_fixes)
            diagnosis = self.agents.summarize_error(failure)
            fixes += 1
            try:
                source = self.agents.fix(Role.RUNTIME_ERROR_FIXER, source, diagnosis)
                cv.source_path.write_text(source)
                rebuild = self._rebuild_internal(cv, vdir)
                if not rebuild.ok:
                    # fall through: next iteration reruns the old executable
                    # only if the rebuild produced one; surface the compile
                    # log as the next diagnosis instead.
                    failure = rebuild.stderr_path.read_text() or "rebuild failed"
            except NoChangeProduced:
                pass

    def _ensure_baseline(self, fortran_path: Path) -> Path:
        if self._baseline_exe is None:
            exe = self.workdir / "baseline.x"
            outcome = compile_baseline(fortran_path, self.target, exe_path=exe)
            self._trace_job(outcome, "baseline_build")
            if not outcome.ok:
                raise ExecutorFailure(
                    f"baseline fixture failed to compile: {outcome.stderr_path}")
            self._baseline_exe = exe
        return self._baseline_exe

    def _functionality_stage(self, cv: CodeVersion, vdir: Path, exe: Path,
                             source: str, fortran_source: str,
                             fortran_path: Path) -> str:
        """Inject capture code, compare against the baseline across a small
        sweep, and loop through the functionality fixer on mismatch. The
        injected code never survives into the version's stored source."""
        spec = self.injection
        baseline_exe = None
        if spec.rule is not CompareRule.NONZERO:
            baseline_exe = self._ensure_baseline(fortran_path)
        func_sizes = sweep_sizes(self.cfg.min_n, self.cfg.max_n, self.cfg.func_sweep_count)
        source_before = source
        fixes = 0
        while True:
            diagnosis = None
            instrumented = inject_capture(source, spec)
            instr_path = vdir / "instrumented.cpp"
            instr_path.write_text(instrumented)
            instr_exe = vdir / "instrumented.x"
            build = build_program(instr_path, self.target, exe_path=instr_exe,
                                  log_stem="instrumented_build")
            self._trace_job(build, "functionality_build")
            report: Optional[FunctionalityReport] = None
            if not build.ok:
                diagnosis = ("instrumented program failed to compile:\n"
                             + (build.stderr_path.read_text() or "(empty log)"))
            else:
                scratch = self.workdir / "scratch" / f"v{cv.version}_try{fixes}"
                cv.functionality_attempts += 1
                report = run_equivalence(instr_exe, baseline_exe, func_sizes,
                                         self.cfg.kernel_repetitions, self.target,
                                         spec, scratch,
                                         baseline_run_template=self.baseline_run_template)
                self._trace({"event": "functionality", "verdict": report.verdict,
                             "sizes": list(report.sizes_tested)})
                if report.passed:
                    (vdir / "functionality.json").write_text(
                        json.dumps(report.to_dict(), indent=2))
                    if source != source_before:
                        # measured runtimes came from the pre-fix program;
                        # refresh them on the corrected source.
                        rebuild = self._rebuild_internal(cv, vdir)
                        if rebuild.ok:
                            self._refresh_runtimes(cv, vdir, exe)
                    return strip_injection(source) if "kernelport:capture" in source else source
                diagnosis = json.dumps(report.to_dict(), indent=2)
            if fixes >= self.cfg.max_functionality_fixes:
                cv.status = VersionStatus.TESTED_FAILED
                if report is not None:
                    (vdir / "functionality.json").write_text(
                        json.dumps(report.to_dict(), indent=2))
                raise BudgetExhausted("functionality", cv.version,
                                      self.cfg.max_functionality_fixes)
            fixes += 1
            try:
                source = self.agents.fix(Role.FUNCTIONALITY_FIXER, source, diagnosis,
                                         fortran_source=fortran_source)
                cv.source_path.write_text(source)
            except NoChangeProduced:
                pass

    def _refresh_runtimes(self, cv: CodeVersion, vdir: Path, exe: Path) -> None:
        runtimes: dict[int, float] = {}
        for n in self.cfg.sizes():
            outcome = run_program(exe, n, self.cfg.kernel_repetitions, False,
                                  self.target, cwd=vdir, log_stem=f"rerun_{n}")
            self._trace_job(outcome, "rerun")
            if not outcome.ok or outcome.parsed_runtime is None:
                return  # keep the previous measurements
            runtimes[n] = outcome.parsed_runtime
        cv.runtimes = runtimes

    def _score(self, cv: CodeVersion) -> None:
        max_n = self.cfg.sizes()[-1]
        runtime = cv.runtimes.get(max_n)
        if runtime is None or self.cfg.kernel_id.upper() not in DEFAULT_RUNTIME_SETTINGS:
            return
        policy = self.cfg.iteration_policy()
        i_hat = perfmodel.scaled_iterations(policy, max_n, self.cfg.min_n, self.cfg.max_n)
        cv.gflops_at_max_n = perfmodel.gflops(
            self.cfg.kernel_id, max_n, i_hat, self.cfg.kernel_repetitions, runtime)


def run_pipeline(cfg: PipelineConfig, fortran_source: str, *, target: TargetProfile,
                 agents: Agents, injection: InjectionSpec,
                 baseline_run_template: Optional[str] = None) -> PipelineResult:
    """Convenience wrapper constructing and running a :class:`Pipeline`."""
    return Pipeline(cfg, target, agents, injection,
                    baseline_run_template=baseline_run_template).run(fortran_source)
