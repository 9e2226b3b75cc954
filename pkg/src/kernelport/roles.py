"""The agent roles: prompt contracts and output post-processing.

Each role is a prompt template pair (system/user) plus a rule for what
the workflow accepts from the model. Roles are stateless; all state
lives in the workflow and the gateway ledger.
"""
from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import MissingContextKey, NoChangeProduced
from .gateway import Gateway, ModelRef, extract_code_block

ERROR_SUMMARY_MAX_LINES = 20


class Role(str, Enum):
    TRANSLATOR = "translator"
    VALIDATOR = "validator"
    VALIDATION_FIXER = "validation_fixer"
    ERROR_SUMMARIZER = "error_summarizer"
    COMPILE_ERROR_FIXER = "compile_error_fixer"
    RUNTIME_ERROR_FIXER = "runtime_error_fixer"
    FUNCTIONALITY_FIXER = "functionality_fixer"
    OPTIMIZER = "optimizer"


class OutputKind(str, Enum):
    SOURCE_CODE = "source_code"
    VERDICT = "verdict"
    PLAIN_TEXT = "plain_text"


_ROLE_CONTEXT_KEYS = {
    Role.TRANSLATOR: ["kernel_id", "fortran_source"],
    Role.VALIDATOR: ["source"],
    Role.VALIDATION_FIXER: ["source", "issues"],
    Role.ERROR_SUMMARIZER: ["stderr_log"],
    Role.COMPILE_ERROR_FIXER: ["source", "diagnosis"],
    Role.RUNTIME_ERROR_FIXER: ["source", "diagnosis"],
    Role.FUNCTIONALITY_FIXER: ["source", "diagnosis", "fortran_source"],
    Role.OPTIMIZER: ["source", "profile_summary"],
}

_ROLE_OUTPUT_KIND = {
    Role.TRANSLATOR: OutputKind.SOURCE_CODE,
    Role.VALIDATOR: OutputKind.VERDICT,
    Role.VALIDATION_FIXER: OutputKind.SOURCE_CODE,
    Role.ERROR_SUMMARIZER: OutputKind.PLAIN_TEXT,
    Role.COMPILE_ERROR_FIXER: OutputKind.SOURCE_CODE,
    Role.RUNTIME_ERROR_FIXER: OutputKind.SOURCE_CODE,
    Role.FUNCTIONALITY_FIXER: OutputKind.SOURCE_CODE,
    Role.OPTIMIZER: OutputKind.SOURCE_CODE,
}

FIXER_ROLES = (
    Role.VALIDATION_FIXER,
    Role.COMPILE_ERROR_FIXER,
    Role.RUNTIME_ERROR_FIXER,
    Role.FUNCTIONALITY_FIXER,
)


@dataclass(frozen=True)
class RoleSpec:
    role: Role
    system_prompt_template: str
    user_prompt_template: str
    required_context_keys: tuple[str, ...]
    output_kind: OutputKind


def _read_template(name: str, override_dir: Optional[Path]) -> str:
    if override_dir is not None:
        candidate = Path(override_dir) / name
        if candidate.exists():
            return candidate.read_text()
    return resources.files("kernelport.prompts").joinpath(name).read_text()


def load_role_specs(override_dir=None) -> dict[Role, RoleSpec]:
    """Load all role templates, preferring files from `override_dir`."""
    override = Path(override_dir) if override_dir else None
    specs = {}
    for role in Role:
        specs[role] = RoleSpec(
            role=role,
            system_prompt_template=_read_template(f"{role.value}.system.txt", override),
            user_prompt_template=_read_template(f"{role.value}.user.txt", override),
            required_context_keys=tuple(_ROLE_CONTEXT_KEYS[role]),
            output_kind=_ROLE_OUTPUT_KIND[role],
        )
    return specs


def _template_fields(template: str) -> set[str]:
    return {
        field_name
        for _, field_name, _, _ in string.Formatter().parse(template)
        if field_name
    }


def render_prompt(spec: RoleSpec, context: dict[str, str]) -> tuple[str, str]:
    """Deterministic template substitution; missing keys are an error."""
    needed = set(spec.required_context_keys) | _template_fields(
        spec.system_prompt_template
    ) | _template_fields(spec.user_prompt_template)
    missing = needed - set(context)
    if missing:
        raise MissingContextKey(f"{spec.role.value}: missing {sorted(missing)}")
    system = spec.system_prompt_template.format(**context)
    user = spec.user_prompt_template.format(**context)
    return system, user


@dataclass(frozen=True)
class ValidationVerdict:
    is_valid: bool
    issues: tuple[str, ...] = ()

    def __post_init__(self):
        if self.is_valid and self.issues:
            raise ValueError("a valid verdict carries no issues")


_CODE_CHARS = set(';{}()[]=<>#"\'&|`$\\')
_COMMENT_PREFIXES = ("//", "/*", "*", "#", "!")


def structural_issues(source: str) -> list[str]:
    """Deterministic pre-check: fences, prose outside comments, brace balance."""
    issues = []
    if "```" in source:
        issues.append("markdown fence marker present")
    for lineno, line in enumerate(source.split("\n"), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith(_COMMENT_PREFIXES):
            continue
        if _CODE_CHARS.intersection(stripped):
            continue
        words = stripped.split()
        if len(words) >= 4 and all(w.rstrip(".,:").isalpha() for w in words):
            issues.append(f"prose outside comments at line {lineno}: {stripped[:60]!r}")
    if source.count("{") != source.count("}"):
        issues.append("unbalanced braces")
    return issues


@dataclass
class Agents:
    """Invokes each role through the gateway and enforces its contract."""

    gateway: Gateway
    model: ModelRef
    specs: dict[Role, RoleSpec] = field(default_factory=load_role_specs)
    transcript_sink: Optional[object] = None  # callable(role, system, user, result)

    def _complete(self, role: Role, context: dict[str, str]) -> str:
        system, user = render_prompt(self.specs[role], context)
        result = self.gateway.complete(self.model, role.value, system, user)
        if self.transcript_sink is not None:
            self.transcript_sink(role.value, system, user, result)
        return result.text

    def translate(self, fortran_source: str, kernel_id: str) -> str:
        if not fortran_source.strip():
            raise ValueError("fortran_source must be non-empty")
        raw = self._complete(Role.TRANSLATOR, {
            "fortran_source": fortran_source,
            "kernel_id": kernel_id,
        })
        return extract_code_block(raw)

    def validate(self, source: str, structural_only: bool = False) -> ValidationVerdict:
        """Structural pre-check plus a model verdict; invalid if either rejects.

        The structural check catches trivial junk without token spend; a
        provider error only affects the model half.
        """
        issues = structural_issues(source)
        if issues:
            return ValidationVerdict(False, tuple(issues))
        if structural_only:
            return ValidationVerdict(True)
        raw = self._complete(Role.VALIDATOR, {"source": source})
        lines = [ln.strip() for ln in raw.strip().splitlines() if ln.strip()]
        head = lines[0].upper() if lines else ""
        if head.startswith("VALID"):
            return ValidationVerdict(True)
        model_issues = lines[1:] or [raw.strip() or "model rejected source"]
        return ValidationVerdict(False, tuple(model_issues))

    def summarize_error(self, stderr_log: str) -> str:
        if not stderr_log.strip():
            raise ValueError("stderr_log must be non-empty")
        raw = self._complete(Role.ERROR_SUMMARIZER, {"stderr_log": stderr_log})
        return clamp_lines(raw.strip(), ERROR_SUMMARY_MAX_LINES)

    def fix(self, role: Role, source: str, diagnosis: str, **extra_context) -> str:
        if role not in FIXER_ROLES:
            raise ValueError(f"{role} is not a fixer role")
        if not source.strip() or not diagnosis.strip():
            raise ValueError("source and diagnosis must be non-empty")
        context = {"source": source, "diagnosis": diagnosis, "issues": diagnosis}
        context.update(extra_context)
        if role is Role.FUNCTIONALITY_FIXER and not context.get("fortran_source"):
            raise MissingContextKey("functionality fixer requires fortran_source")
        fixed = extract_code_block(self._complete(role, context))
        if fixed == source:
            raise NoChangeProduced(f"{role.value} returned the input unchanged")
        return fixed

    def optimize(self, source: str, profile_summary: str) -> str:
        summary = profile_summary.strip() or "no profiler findings; improve general efficiency"
        optimized = extract_code_block(self._complete(Role.OPTIMIZER, {
            "source": source,
            "profile_summary": summary,
        }))
        if optimized == source:
            raise NoChangeProduced("optimizer returned the input unchanged")
        return optimized


def clamp_lines(text: str, limit: int) -> str:
    lines = text.splitlines()
    if len(lines) <= limit:
        return text
    return "\n".join(lines[:limit])
