"""The full translate-build-run-test-optimize loop, hermetically.

Everything external is stubbed: the "model" is a deterministic scripted
provider, the "compiler" is cp, and the kernel programs are tiny shell
scripts. The pipeline still exercises every stage: translation,
validation, build, run sweep, functionality comparison against the
baseline, and five optimization rounds.
"""
import hashlib
import re
import tempfile
import textwrap
from pathlib import Path

from kernelport.executors import TargetProfile
from kernelport.functest import InjectionSpec
from kernelport.gateway import CompletionResult, Gateway, ModelRef, TokenUsage
from kernelport.pipeline import PipelineConfig, run_pipeline
from kernelport.roles import Agents

BASELINE = textwrap.dedent("""\
    # baseline driver: writes the result vector, prints the timing line
    n=$1; reps=$2
    for i in 1 2 3 4; do echo "$i.0" >> capture.csv; done
    echo "0.001000"
""")

TRANSLATED = textwrap.dedent("""\
    #!/bin/sh
    # portable version of the toy kernel
    n=$1; reps=$2
    # sync-point
    echo "0.002000"
""")

CAPTURE = 'for i in 1 2 3 4; do echo "$i.0" >> capture.csv; done'

_FENCED = re.compile(r"```[a-z]*\n(.*?)\n```", re.DOTALL)


class DemoProvider:
    """Deterministic canned responses keyed on the agent role."""

    def complete(self, model, role, system, user):
        tag = hashlib.sha256(user.encode()).hexdigest()[:8]
        if role == "translator":
            text = f"```cpp\n{TRANSLATED}\n```"
        elif role == "validator":
            text = "VALID"
        elif role == "optimizer":
            src = _FENCED.findall(user)[-1]
            text = f"```cpp\n{src}\n# tuned {tag}\n```"
        else:
            src = _FENCED.findall(user)[-1]
            text = f"```cpp\n{src}\n# patched {tag}\n```"
        return CompletionResult(text, TokenUsage(100, 50), model.name)


workdir = Path(tempfile.mkdtemp(prefix="kernelport-demo-"))
cfg = PipelineConfig(
    kernel_id="toycopy", target_id="stub-local", model_ref="demo-model",
    workdir=workdir, min_n=4, max_n=8, num_sizes=2, kernel_repetitions=1,
)
target = TargetProfile(
    target_id="stub-local",
    compile_command_template="cp {source} {exe}",
    run_command_template="sh {exe} {n} {reps}",
    fortran_compile_command="cp {source} {exe}",
)
injection = InjectionSpec(kernel_id="toycopy", anchor="# sync-point",
                          capture_snippet=CAPTURE, comment_prefix="#")
agents = Agents(gateway=Gateway(DemoProvider()),
                model=ModelRef("demo-model", "http://localhost:9/v1", 1.25, 10.0))

result = run_pipeline(cfg, BASELINE, target=target, agents=agents,
                      injection=injection)

print(f"workdir: {workdir}\n")
print("version trajectory:")
for cv in result.versions:
    print(f"  v{cv.version}: status={cv.status.value} "
          f"builds={cv.build_attempts} runs={cv.run_attempts} "
          f"func={cv.functionality_attempts} runtimes={cv.runtimes}")

print("\nsummary.csv:")
print(result.summary_csv.read_text())
