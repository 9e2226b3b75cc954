"""Build/run execution through pluggable backends.

Two backends: a local subprocess backend, and a batch backend that
renders a job script, submits it through a configurable submit command,
polls a status command until a terminal state, and collects logs.
Environment setup is a list of opaque shell lines prepended to every
payload, standing in for whatever module/package manager the site uses.
"""
from __future__ import annotations

import re
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

from .errors import ExecutorFailure, JobTimeout, SchedulerUnavailable

DEFAULT_WALLCLOCK_MINUTES = 30.0


class BackendKind(str, Enum):
    LOCAL = "local"
    BATCH = "batch"


class ProfilerKind(str, Enum):
    NONE = "none"
    NCU_LIKE = "ncu_like"
    ROCPROF_LIKE = "rocprof_like"


@dataclass(frozen=True)
class TargetProfile:
    target_id: str
    backend: BackendKind = BackendKind.LOCAL
    env_setup_commands: tuple[str, ...] = ()
    compile_command_template: str = "g++ -O2 -o {exe} {source}"
    run_command_template: str = "{exe} {n} {reps}"
    fortran_compile_command: str = "gfortran -fopenmp -O2 -o {exe} {source}"
    profiler: ProfilerKind = ProfilerKind.NONE
    profiler_command_template: str = ""  # uses {report} {exe} {n} {reps}
    wallclock_limit: float = DEFAULT_WALLCLOCK_MINUTES  # minutes
    # batch-only knobs
    scheduler_directives: tuple[str, ...] = ()
    submit_command_template: str = ""   # {script}; stdout = job id
    status_command_template: str = ""   # {job_id}; stdout = job state
    collect_command_template: str = ""  # {job_id}; optional log collection
    poll_interval_seconds: float = 5.0

    def __post_init__(self):
        for placeholder in ("{source}", "{exe}"):
            if placeholder not in self.compile_command_template:
                raise ValueError(f"compile_command_template needs {placeholder}")
            if placeholder not in self.fortran_compile_command:
                raise ValueError(f"fortran_compile_command needs {placeholder}")
        for placeholder in ("{exe}", "{n}", "{reps}"):
            if placeholder not in self.run_command_template:
                raise ValueError(f"run_command_template needs {placeholder}")


class JobKind(str, Enum):
    BUILD = "build"
    RUN = "run"


@dataclass(frozen=True)
class JobOutcome:
    kind: JobKind
    exit_status: int
    stdout_path: Path
    stderr_path: Path
    parsed_runtime: Optional[float] = None
    profiler_report_path: Optional[Path] = None

    @property
    def ok(self) -> bool:
        return self.exit_status == 0


# Last stdout line carrying a non-negative decimal with exactly six
# fractional digits wins; tolerates preamble output before the timing line.
_RUNTIME_RE = re.compile(r"(?<![\d.])(\d+\.\d{6})(?![\d])")


def parse_runtime(stdout_text: str) -> Optional[float]:
    matches = _RUNTIME_RE.findall(stdout_text)
    return float(matches[-1]) if matches else None


def render_job_script(target: TargetProfile, payload: str) -> str:
    """Job script as a pure function of (target, payload): shebang,
    scheduler directives, environment setup, then the payload command."""
    lines = ["#!/bin/bash"]
    lines.extend(target.scheduler_directives)
    if target.scheduler_directives:
        lines.append(f"# wallclock limit: {target.wallclock_limit:g} minutes")
    lines.extend(target.env_setup_commands)
    lines.append(payload)
    return "\n".join(lines) + "\n"


def _run_shell(script: str, cwd: Optional[Path], timeout_s: float) -> subprocess.CompletedProcess:
    try:
        return subprocess.run(
            ["bash", "-c", script],
            cwd=str(cwd) if cwd else None,
            capture_output=True,
            text=True,
            timeout=timeout_s,
        )
    except subprocess.TimeoutExpired as exc:
        raise JobTimeout(f"command exceeded {timeout_s:.0f}s: {script[:120]}") from exc
    except OSError as exc:
        raise ExecutorFailure(str(exc)) from exc


def _execute(target: TargetProfile, payload: str, stdout_path: Path,
             stderr_path: Path, cwd: Optional[Path] = None) -> int:
    """Run env setup plus payload under the configured backend, capturing
    stdout/stderr to the given paths. Returns the payload exit status."""
    stdout_path.parent.mkdir(parents=True, exist_ok=True)
    stderr_path.parent.mkdir(parents=True, exist_ok=True)
    # brace group so compound payloads redirect as a unit
    redirected = (
        f"{{ {payload} ; }} > {shlex.quote(str(stdout_path))}"
        f" 2> {shlex.quote(str(stderr_path))}"
    )
    if target.backend is BackendKind.LOCAL:
        script = "\n".join([*target.env_setup_commands, redirected])
        proc = _run_shell(script, cwd, target.wallclock_limit * 60)
        return proc.returncode
    script_text = render_job_script(target, redirected)
    return submit_and_wait(script_text, target, cwd=cwd)


def submit_and_wait(script: str, target: TargetProfile, cwd: Optional[Path] = None) -> int:
    """Submit a rendered job script and block until a terminal state.

    The submit command's stdout is the job id; the status command is
    polled until it reports a terminal state or the wallclock limit
    elapses. States containing COMPLETED map to exit 0, FAILED/CANCELLED
    /TIMEOUT to exit 1.
    """
    if not target.submit_command_template or not target.status_command_template:
        raise SchedulerUnavailable("batch backend needs submit and status command templates")
    workdir = cwd or Path.cwd()
    script_path = workdir / f"job_{int(time.time() * 1e6)}.sh"
    script_path.write_text(script)
    submit_cmd = target.submit_command_template.format(script=shlex.quote(str(script_path)))
    proc = _run_shell(submit_cmd, cwd, timeout_s=60)
    if proc.returncode != 0:
        raise SchedulerUnavailable(f"submit failed: {proc.stderr.strip()[:500]}")
    job_id = proc.stdout.strip().split()[-1] if proc.stdout.strip() else ""
    if not job_id:
        raise SchedulerUnavailable("submit command produced no job id")

    deadline = time.monotonic() + target.wallclock_limit * 60
    status_cmd = target.status_command_template.format(job_id=shlex.quote(job_id))
    while True:
        proc = _run_shell(status_cmd, cwd, timeout_s=60)
        state = proc.stdout.strip().upper()
        if "COMPLETED" in state or state in ("DONE", "SUCCESS"):
            exit_status = 0
            break
        if any(tok in state for tok in ("FAILED", "CANCELLED", "TIMEOUT", "ERROR")):
            exit_status = 1
            break
        if time.monotonic() >= deadline:
            raise JobTimeout(f"job {job_id} still {state or 'unknown'} at wallclock limit")
        time.sleep(target.poll_interval_seconds)

    if target.collect_command_template:
        collect_cmd = target.collect_command_template.format(job_id=shlex.quote(job_id))
        _run_shell(collect_cmd, cwd, timeout_s=60)
    return exit_status


def build_program(source_path, target: TargetProfile, *, exe_path=None,
                  log_stem="build") -> JobOutcome:
    """Compile a C++ source; a nonzero compiler exit is a normal outcome."""
    source_path = Path(source_path)
    if not source_path.exists():
        raise FileNotFoundError(source_path)
    exe = Path(exe_path) if exe_path else source_path.with_suffix(".x")
    cmd = target.compile_command_template.format(
        source=shlex.quote(str(source_path)), exe=shlex.quote(str(exe))
    )
    out = source_path.parent / f"{log_stem}.out"
    err = source_path.parent / f"{log_stem}.log"
    status = _execute(target, cmd, out, err, cwd=source_path.parent)
    return JobOutcome(JobKind.BUILD, status, out, err)


def compile_baseline(fortran_source, target: TargetProfile, *, exe_path=None,
                     log_stem="baseline_build") -> JobOutcome:
    """Compile the driver-wrapped Fortran reference program."""
    fortran_source = Path(fortran_source)
    if not fortran_source.exists():
        raise FileNotFoundError(fortran_source)
    exe = Path(exe_path) if exe_path else fortran_source.with_suffix(".x")
    cmd = target.fortran_compile_command.format(
        source=shlex.quote(str(fortran_source)), exe=shlex.quote(str(exe))
    )
    out = fortran_source.parent / f"{log_stem}.out"
    err = fortran_source.parent / f"{log_stem}.log"
    status = _execute(target, cmd, out, err, cwd=fortran_source.parent)
    return JobOutcome(JobKind.BUILD, status, out, err)


def run_program(exe, n: int, reps: int, profile: bool, target: TargetProfile, *,
                cwd=None, log_stem=None) -> JobOutcome:
    """Run the program at one size; parse the timing line from stdout.

    With profile=True the command is wrapped by the target's profiler
    template and the report path is recorded on the outcome.
    """
    exe = Path(exe)
    if not exe.exists():
        raise FileNotFoundError(exe)
    if n < 1 or reps < 1:
        raise ValueError("n and reps must be >= 1")
    workdir = Path(cwd) if cwd else exe.parent
    workdir.mkdir(parents=True, exist_ok=True)
    stem = log_stem or f"run_{n}"
    report_path = None
    if profile and target.profiler is not ProfilerKind.NONE and target.profiler_command_template:
        report_path = workdir / f"profile_{n}.report"
        cmd = target.profiler_command_template.format(
            report=shlex.quote(str(report_path)),
            exe=shlex.quote(str(exe)), n=n, reps=reps,
        )
    else:
        cmd = target.run_command_template.format(
            exe=shlex.quote(str(exe)), n=n, reps=reps,
        )
    out = workdir / f"{stem}.log"
    err = workdir / f"{stem}.err"
    status = _execute(target, cmd, out, err, cwd=workdir)
    runtime = parse_runtime(out.read_text()) if status == 0 and out.exists() else None
    return JobOutcome(JobKind.RUN, status, out, err, parsed_runtime=runtime,
                      profiler_report_path=report_path)
