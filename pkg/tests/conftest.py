"""Shared fixtures: a deterministic scripted provider and a hermetic
stub target whose "compiler" is cp and whose programs are shell scripts,
so the whole pipeline runs without any real toolchain or network."""
from __future__ import annotations

import hashlib
import re
import textwrap

import pytest

from kernelport.executors import BackendKind, ProfilerKind, TargetProfile
from kernelport.functest import CompareRule, InjectionSpec
from kernelport.gateway import CompletionResult, Gateway, ModelRef, TokenUsage
from kernelport.roles import Agents

TOY_FORTRAN = textwrap.dedent("""\
    subroutine copy_kernel(n, reps)
      integer n, reps
      do r = 1, reps
        do i = 1, n
          b(i) = a(i)
        end do
      end do
    end subroutine
""")

# What the stub target actually executes for the baseline (its "compiler"
# is cp, its "runner" is sh). Prints the timing line and dumps the result
# array to the capture CSV.
TOY_BASELINE_SCRIPT = textwrap.dedent("""\
    # baseline driver for the toy copy kernel
    n=$1
    reps=$2
    i=1
    while [ $i -le 4 ]; do
      echo "$i.0" >> capture.csv
      i=$((i+1))
    done
    echo "0.001000"
""")

TOY_TRANSLATED = textwrap.dedent("""\
    #!/bin/sh
    # toy copy kernel, portable version
    n=$1
    reps=$2
    # sync-point
    echo "0.002000"
""")

CAPTURE_SNIPPET = textwrap.dedent("""\
    i=1
    while [ $i -le 4 ]; do
      echo "$i.0" >> capture.csv
      i=$((i+1))
    done""")

BAD_CAPTURE_SNIPPET = textwrap.dedent("""\
    i=1
    while [ $i -le 4 ]; do
      echo "9.0" >> capture.csv
      i=$((i+1))
    done""")

_FENCE_BLOCKS = re.compile(r"```[a-z]*\n(.*?)\n```", re.DOTALL)


def _last_fenced(user: str) -> str:
    blocks = _FENCE_BLOCKS.findall(user)
    return blocks[-1] if blocks else ""


class ScriptedProvider:
    """Deterministic stand-in for a model endpoint.

    Fixers and the optimizer echo the prompt's source with one comment
    line appended (keyed to the prompt hash, so repeated fixes differ);
    the translator returns a canned program; the validator approves.
    """

    def __init__(self, translated=TOY_TRANSLATED, comment_prefix="#"):
        self.translated = translated
        self.comment_prefix = comment_prefix

    def complete(self, model, role, system, user):
        tag = hashlib.sha256(user.encode()).hexdigest()[:8]
        if role == "translator":
            text = f"```cpp\n{self.translated}\n```"
        elif role == "validator":
            text = "VALID"
        elif role == "error_summarizer":
            first = user.strip().splitlines()[-1][:80]
            text = f"root cause: {first}\nsuggested fix: check the command"
        elif role == "optimizer":
            src = _last_fenced(user)
            text = f"```cpp\n{src}\n{self.comment_prefix} tuned {tag}\n```"
        else:  # the fixer roles
            src = _last_fenced(user)
            text = f"```cpp\n{src}\n{self.comment_prefix} patched {tag}\n```"
        return CompletionResult(text=text, usage=TokenUsage(100, 50), model=model.name)


STUB_MODEL = ModelRef(
    name="stub-model",
    endpoint="http://localhost:9999/v1",
    price_in_per_mtok=1.25,
    price_out_per_mtok=10.0,
)


def make_stub_target(fail_compile=False, fail_run=False) -> TargetProfile:
    compile_tpl = "cp {source} {exe}"
    if fail_compile:
        compile_tpl = "echo cannot-compile {source} into {exe} 1>&2; exit 1"
    run_tpl = "sh {exe} {n} {reps}"
    if fail_run:
        run_tpl = "echo runtime-fault {exe} {n} {reps} 1>&2; exit 1"
    return TargetProfile(
        target_id="stub-local",
        backend=BackendKind.LOCAL,
        compile_command_template=compile_tpl,
        run_command_template=run_tpl,
        fortran_compile_command="cp {source} {exe}",
        profiler=ProfilerKind.NONE,
        wallclock_limit=1.0,
    )


def make_injection(snippet=CAPTURE_SNIPPET, rule=CompareRule.ELEMENTWISE_TOL) -> InjectionSpec:
    return InjectionSpec(
        kernel_id="custom",
        anchor="# sync-point",
        capture_snippet=snippet,
        output_csv_name="capture.csv",
        comment_prefix="#",
        rule=rule,
    )


# one pass/fail line per acceptance criterion, echoed into the terminal
# summary so it survives pytest's output capture
_ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def scripted_agents():
    return Agents(gateway=Gateway(ScriptedProvider()), model=STUB_MODEL)


@pytest.fixture
def stub_target():
    return make_stub_target()
