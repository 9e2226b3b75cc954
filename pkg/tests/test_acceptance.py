"""Acceptance gate: ten checks over the analytical models and the full
replayed pipeline, each reporting one pass/fail line."""
import functools
import json
import random
import time

import pytest

from kernelport.errors import AnchorAmbiguous, AnchorMissing, BudgetExhausted
from kernelport.gateway import (
    CompletionResult,
    Gateway,
    ModelRef,
    RecordingProvider,
    TokenUsage,
    compute_cost,
    extract_code_block,
)
from kernelport.perfmodel import (
    BoundClass,
    DEFAULT_ITERATION_POLICIES,
    flops,
    roofline_point,
    scaled_iterations,
)
from kernelport.pipeline import DEFAULT_RUNTIME_SETTINGS, run_pipeline
from kernelport.profiling import parse_opt_points
from kernelport.functest import inject_capture, strip_injection
from kernelport.roles import Agents
from kernelport.cli import EXIT_OK, main

from conftest import (
    BAD_CAPTURE_SNIPPET,
    STUB_MODEL,
    TOY_BASELINE_SCRIPT,
    ScriptedProvider,
    make_injection,
    make_stub_target,
    record_acceptance,
)
from test_perfmodel import oracle_flops
from test_pipeline import toy_config
from test_profiling import TWO_BLOCK_REPORT
from test_cli_reports import record_store, write_config


def criterion(num, desc):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            started = time.perf_counter()
            try:
                fn(*args, **kwargs)
            except Exception:
                record_acceptance(f"criterion {num:2d} FAIL  {desc}")
                print(f"criterion {num:2d} FAIL  {desc}")
                raise
            elapsed = time.perf_counter() - started
            line = f"criterion {num:2d} PASS  {desc} ({elapsed:.2f}s)"
            record_acceptance(line)
            print(line)
        return wrapper
    return deco


@criterion(1, "roofline table rows within 0.1pp and correct bound classes")
def test_criterion_1_roofline():
    started = time.perf_counter()
    rows = [
        (1.36e11, 0.12, 1.8, BoundClass.MEMORY_BOUND),
        (3.93e12, 35301.0, 52.4, BoundClass.COMPUTE_BOUND),
        (6.99e11, 0.58, 9.3, BoundClass.MEMORY_BOUND),
        (1.48e11, 1.52, 2.0, BoundClass.MEMORY_BOUND),
        (1.88e12, 15.17, 25.1, BoundClass.COMPUTE_BOUND),
    ]
    for achieved, ai, pct, bound in rows:
        point = roofline_point(achieved, ai, 7.5e12, 4.8)
        assert point.percent_of_peak == pytest.approx(pct, abs=0.1)
        assert point.bound_class is bound
    assert time.perf_counter() - started < 1.0


@criterion(2, "closed-form flop model matches independent oracle on 200 random tuples")
def test_criterion_2_flop_oracle():
    started = time.perf_counter()
    rng = random.Random(424242)
    mismatches = 0
    for _ in range(200):
        kernel = rng.choice(["CG", "EP", "MG", "FT", "DGEMM"])
        n = rng.randint(1, 10**6)
        r = rng.randint(1, 1000)
        if flops(kernel, n, r) != oracle_flops(kernel, n, r):
            mismatches += 1
    assert mismatches == 0
    assert time.perf_counter() - started < 5.0


@criterion(3, "API pricing worked examples exact to 1e-6 USD")
def test_criterion_3_pricing():
    premium = ModelRef("premium", "https://x.test", 1.25, 10.0)
    mini = ModelRef("mini", "https://x.test", 1.10, 4.40)
    assert abs(compute_cost(TokenUsage(1_000_000, 100_000), premium) - 2.25) < 1e-6
    assert abs(compute_cost(TokenUsage(1_000_000, 1_000_000), mini) - 5.50) < 1e-6


@criterion(4, "replayed end-to-end run: 6 versions, 6 rows, 6/6/6 invocations, deterministic x3")
def test_criterion_4_end_to_end_replay(tmp_path, monkeypatch):
    started = time.perf_counter()
    store = tmp_path / "store"
    record_store(tmp_path, store)
    fortran = tmp_path / "baseline.f90"
    fortran.write_text(TOY_BASELINE_SCRIPT)
    monkeypatch.setenv("PIPELINE_LLM_MODE", "replay")

    stable_outputs = []
    for i in range(3):
        workdir = tmp_path / f"run{i}"
        config = write_config(tmp_path, workdir, store, fortran)
        assert main(["run", "--config", str(config)]) == EXIT_OK

        vdirs = sorted(workdir.glob("toycopy.v*"))
        assert len(vdirs) == 6
        summary = (workdir / "summary.csv").read_text().splitlines()
        assert len(summary) == 7  # header + 6 rows

        inv_out = tmp_path / f"inv{i}.csv"
        assert main(["report", "--kind", "invocations", "--workdir", str(workdir),
                     "--out", str(inv_out)]) == EXIT_OK
        assert inv_out.read_text().splitlines()[-1] == "total,6,6,6"

        # everything except the wall-time column must be byte-identical
        no_elapsed = "\n".join(",".join(l.split(",")[:-1]) for l in summary)
        sources = "\n===\n".join((d / "source.cpp").read_text() for d in vdirs)
        stable_outputs.append((no_elapsed, sources))
    assert stable_outputs[0] == stable_outputs[1] == stable_outputs[2]
    assert time.perf_counter() - started < 60.0


@criterion(5, "budget exhaustion after exactly 20/20/10 fix attempts, no extra versions")
def test_criterion_5_budget_enforcement(tmp_path):
    cases = [
        ("compile", dict(fail_compile=True), make_injection(), 20,
         lambda v: v["build_attempts"]),
        ("runtime", dict(fail_run=True), make_injection(), 20,
         lambda v: v["run_attempts"]),
        ("functionality", {}, make_injection(snippet=BAD_CAPTURE_SNIPPET), 10,
         lambda v: v["functionality_attempts"]),
    ]
    for stage, target_kw, injection, budget, attempts_of in cases:
        cfg = toy_config(tmp_path / stage, max_compile_fixes=20,
                         max_runtime_fixes=20, max_functionality_fixes=10)
        agents = Agents(gateway=Gateway(ScriptedProvider()), model=STUB_MODEL)
        with pytest.raises(BudgetExhausted) as exc:
            run_pipeline(cfg, TOY_BASELINE_SCRIPT,
                         target=make_stub_target(**target_kw),
                         agents=agents, injection=injection)
        assert exc.value.stage == stage
        assert exc.value.budget == budget
        vdirs = sorted(cfg.workdir.glob("toycopy.v*"))
        assert [d.name for d in vdirs] == ["toycopy.v1"]
        saved = json.loads((vdirs[0] / "version.json").read_text())
        assert saved["status"] == "aborted"
        assert attempts_of(saved) == budget + 1  # 1 initial try + `budget` fixes


@criterion(6, "error summaries never exceed 20 lines over 50 randomized logs")
def test_criterion_6_error_summary_clamp():
    class EchoingSummarizer(ScriptedProvider):
        # echoes the log back, so the clamp has to do the work
        def complete(self, model, role, system, user):
            if role == "error_summarizer":
                return CompletionResult(user, TokenUsage(1, 1), model.name)
            return super().complete(model, role, system, user)

    agents = Agents(gateway=Gateway(EchoingSummarizer()), model=STUB_MODEL)
    rng = random.Random(6)
    for _ in range(50):
        log = "\n".join(f"error {rng.random()}" for _ in range(rng.randint(1, 2000)))
        assert len(agents.summarize_error(log).splitlines()) <= 20


@criterion(7, "capture injection round-trips 100 generated sources byte-for-byte")
def test_criterion_7_injection_round_trip():
    rng = random.Random(7)
    spec = make_injection()
    for _ in range(100):
        body = [f"line_{rng.randint(0, 10**6)}" for _ in range(rng.randint(1, 60))]
        body.insert(rng.randint(0, len(body)), "# sync-point")
        source = "\n".join(body) + ("\n" if rng.random() < 0.5 else "")
        assert strip_injection(inject_capture(source, spec)) == source
    with pytest.raises(AnchorMissing):
        inject_capture("no anchor\n", spec)
    with pytest.raises(AnchorAmbiguous):
        inject_capture("# sync-point\n# sync-point\n", spec)


@criterion(8, "code-block extraction idempotent over a 200-case corpus")
def test_criterion_8_extraction_idempotence():
    rng = random.Random(8)
    corpus = []
    for _ in range(200):
        style = rng.randrange(4)
        body = "\n".join(f"code {rng.random()}" for _ in range(rng.randint(1, 5)))
        prose = " ".join("word" for _ in range(rng.randint(0, 8)))
        if style == 0:        # unfenced
            corpus.append(f"{prose}\n{body}")
        elif style == 1:      # single tagged fence
            corpus.append(f"{prose}\n```cpp\n{body}\n```")
        elif style == 2:      # untagged fence with trailing prose
            corpus.append(f"```\n{body}\n```\n{prose}")
        else:                 # multiple fences
            corpus.append(f"```cpp\n{body}\n```\nmiddle\n```python\nother\n```")
    for text in corpus:
        once = extract_code_block(text)
        assert extract_code_block(once) == once


@criterion(9, "iteration scaling boundaries hold over every configured kernel range")
def test_criterion_9_iteration_scaling():
    for kernel, (min_n, max_n, _, _) in DEFAULT_RUNTIME_SETTINGS.items():
        policy = DEFAULT_ITERATION_POLICIES[kernel]
        assert scaled_iterations(policy, min_n, min_n, max_n) == policy.iter_max
        for n in range(min_n, max_n + 1):
            i_hat = scaled_iterations(policy, n, min_n, max_n)
            assert i_hat >= 2
            if kernel == "DGEMM" and n > min_n:
                assert i_hat == 2


@criterion(10, "OPT report parsing: fixture blocks exact, total under fuzz")
def test_criterion_10_opt_parsing():
    points = parse_opt_points(TWO_BLOCK_REPORT)
    assert len(points) == 2
    assert points[0].estimated_speedup == pytest.approx(25.0)
    assert points[1].estimated_speedup is None
    assert parse_opt_points("") == []
    assert parse_opt_points("Section: nothing advisory here\n----\nplain text") == []
    rng = random.Random(10)
    alphabet = "OPT Section:speedup%-=\n0123456789.'\"abcxyz"
    for _ in range(100):
        blob = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 500)))
        assert isinstance(parse_opt_points(blob), list)
