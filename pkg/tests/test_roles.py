import random

import pytest
from hypothesis import given, strategies as st

from kernelport.errors import MissingContextKey, NoChangeProduced
from kernelport.gateway import CompletionResult, Gateway, TokenUsage
from kernelport.roles import (
    ERROR_SUMMARY_MAX_LINES,
    Agents,
    Role,
    clamp_lines,
    load_role_specs,
    render_prompt,
    structural_issues,
    ValidationVerdict,
)

from conftest import STUB_MODEL, TOY_FORTRAN, ScriptedProvider

SPECS = load_role_specs()


def make_agents(provider=None) -> Agents:
    return Agents(gateway=Gateway(provider or ScriptedProvider()), model=STUB_MODEL)


def test_render_prompt_substitutes_source_verbatim():
    system, user = render_prompt(SPECS[Role.TRANSLATOR], {
        "fortran_source": TOY_FORTRAN, "kernel_id": "CG",
    })
    assert TOY_FORTRAN in user
    assert "{" not in system


def test_translator_prompt_states_the_contract():
    _, user = render_prompt(SPECS[Role.TRANSLATOR], {
        "fortran_source": "x", "kernel_id": "CG",
    })
    assert "inside main() exactly once" in user
    assert "Implement all computational logic fully." in user
    assert "six decimal places" in user
    assert "repetitions" in user


def test_render_prompt_missing_key_raises():
    with pytest.raises(MissingContextKey):
        render_prompt(SPECS[Role.TRANSLATOR], {"kernel_id": "CG"})


def test_render_prompt_is_pure():
    ctx = {"fortran_source": "a {weird} source", "kernel_id": "EP"}
    assert render_prompt(SPECS[Role.TRANSLATOR], ctx) == render_prompt(
        SPECS[Role.TRANSLATOR], ctx)


def test_prompt_templates_overridable(tmp_path):
    (tmp_path / "translator.system.txt").write_text("custom system prompt")
    specs = load_role_specs(tmp_path)
    assert specs[Role.TRANSLATOR].system_prompt_template == "custom system prompt"
    # untouched roles fall back to the packaged templates
    assert specs[Role.VALIDATOR].system_prompt_template == SPECS[Role.VALIDATOR].system_prompt_template


def test_structural_check_rejects_fences_and_prose():
    assert any("fence" in i for i in structural_issues("int main(){}\n```\n"))
    trailing = "int main(){ return 0; }\nThis code fully implements the requested kernel correctly."
    assert any("prose" in i for i in structural_issues(trailing))
    assert structural_issues("#include <cstdio>\nint main(){ return 0; }") == []


def test_structural_check_flags_unbalanced_braces():
    assert any("brace" in i for i in structural_issues("int main(){"))


def test_validate_combines_structural_and_model():
    agents = make_agents()
    ok = agents.validate("int main(){ return 0; }")
    assert ok.is_valid and ok.issues == ()
    bad = agents.validate("int main(){ return 0; }\n```")
    assert not bad.is_valid and any("fence" in i for i in bad.issues)


def test_validate_model_rejection():
    class RejectingProvider(ScriptedProvider):
        def complete(self, model, role, system, user):
            if role == "validator":
                return CompletionResult("INVALID\nlooks incomplete", TokenUsage(1, 1), model.name)
            return super().complete(model, role, system, user)

    verdict = make_agents(RejectingProvider()).validate("int main(){ return 0; }")
    assert verdict == ValidationVerdict(False, ("looks incomplete",))


def test_verdict_invariant():
    with pytest.raises(ValueError):
        ValidationVerdict(True, ("oops",))


def test_translate_extracts_code_and_checks_preconditions():
    agents = make_agents()
    out = agents.translate(TOY_FORTRAN, "custom")
    assert "```" not in out
    with pytest.raises(ValueError):
        agents.translate("   ", "custom")


def test_summarize_error_clamped_to_20_lines():
    class Verbose(ScriptedProvider):
        def complete(self, model, role, system, user):
            if role == "error_summarizer":
                return CompletionResult("\n".join(f"line {i}" for i in range(30)),
                                        TokenUsage(1, 1), model.name)
            return super().complete(model, role, system, user)

    summary = make_agents(Verbose()).summarize_error("some error log")
    assert len(summary.splitlines()) == ERROR_SUMMARY_MAX_LINES
    assert summary.splitlines()[0] == "line 0"


def test_summarize_error_random_logs_never_exceed_20_lines():
    rng = random.Random(3)
    agents = make_agents()
    for _ in range(50):
        log = "\n".join(f"err {rng.random()}" for _ in range(rng.randint(1, 2000)))
        assert len(agents.summarize_error(log).splitlines()) <= 20


def test_summarize_error_short_log_passes_unchanged():
    agents = make_agents()
    out = agents.summarize_error("one line of error")
    assert len(out.splitlines()) <= 20


def test_fix_requires_change():
    class NoOpFixer(ScriptedProvider):
        def complete(self, model, role, system, user):
            if role.endswith("fixer"):
                from conftest import _last_fenced
                return CompletionResult(f"```cpp\n{_last_fenced(user)}\n```",
                                        TokenUsage(1, 1), model.name)
            return super().complete(model, role, system, user)

    agents = make_agents(NoOpFixer())
    with pytest.raises(NoChangeProduced):
        agents.fix(Role.COMPILE_ERROR_FIXER, "int x;", "missing include")


def test_fix_returns_extracted_change():
    agents = make_agents()
    fixed = agents.fix(Role.COMPILE_ERROR_FIXER, "int x;", "missing include")
    assert fixed != "int x;"
    assert "```" not in fixed


def test_functionality_fixer_requires_fortran_source():
    agents = make_agents()
    with pytest.raises(MissingContextKey):
        agents.fix(Role.FUNCTIONALITY_FIXER, "int x;", "mismatch")
    fixed = agents.fix(Role.FUNCTIONALITY_FIXER, "int x;", "mismatch",
                       fortran_source=TOY_FORTRAN)
    assert fixed != "int x;"


def test_optimize_handles_empty_feedback():
    captured = {}

    class Capture(ScriptedProvider):
        def complete(self, model, role, system, user):
            if role == "optimizer":
                captured["user"] = user
            return super().complete(model, role, system, user)

    agents = make_agents(Capture())
    out = agents.optimize("int main(){ return 0; }", "")
    assert "no profiler findings; improve general efficiency" in captured["user"]
    assert out != "int main(){ return 0; }"


@given(st.text(max_size=300), st.integers(1, 30))
def test_clamp_lines_property(text, limit):
    assert len(clamp_lines(text, limit).splitlines()) <= max(limit, 1)
