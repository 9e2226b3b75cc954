"""Declarative run configuration.

One YAML file maps onto the pipeline, target, model, and injection
tables; the LLM mode (live/replay/record) comes from the
PIPELINE_LLM_MODE environment variable, with the transcript store
location named in the file.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import yaml

from .errors import ConfigInvalid
from .executors import BackendKind, ProfilerKind, TargetProfile
from .functest import CompareRule, InjectionSpec
from .gateway import Gateway, ModelRef, provider_from_env
from .pipeline import PipelineConfig, SizeSpacing
from .roles import Agents, load_role_specs


@dataclass
class RunConfig:
    pipeline: PipelineConfig
    target: TargetProfile
    model: ModelRef
    injection: InjectionSpec
    fortran_source_path: Path
    transcript_store: Optional[Path] = None
    prompts_dir: Optional[Path] = None
    baseline_run_template: Optional[str] = None

    def build_agents(self, default_mode: str = "live") -> Agents:
        provider = provider_from_env(self.transcript_store, default_mode=default_mode)
        return Agents(
            gateway=Gateway(provider),
            model=self.model,
            specs=load_role_specs(self.prompts_dir),
        )


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigInvalid(f"missing {key!r} in {where}")
    return mapping[key]


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigInvalid(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{path} does not contain a mapping")

    pipe = _require(data, "pipeline", str(path))
    targ = _require(data, "target", str(path))
    model = _require(data, "model", str(path))
    inject = _require(data, "injection", str(path))

    try:
        pipeline = PipelineConfig(
            kernel_id=_require(pipe, "kernel_id", "pipeline"),
            target_id=_require(targ, "target_id", "target"),
            model_ref=_require(model, "name", "model"),
            workdir=Path(_require(pipe, "workdir", "pipeline")),
            min_n=int(_require(pipe, "min_n", "pipeline")),
            max_n=int(_require(pipe, "max_n", "pipeline")),
            num_sizes=int(pipe.get("num_sizes", 3)),
            size_spacing=SizeSpacing(pipe.get("size_spacing", "uniform")),
            program_iterations=tuple(pipe.get("program_iterations", [2, 5])),
            kernel_repetitions=int(pipe.get("kernel_repetitions", 10)),
            max_compile_fixes=int(pipe.get("max_compile_fixes", 20)),
            max_runtime_fixes=int(pipe.get("max_runtime_fixes", 20)),
            max_functionality_fixes=int(pipe.get("max_functionality_fixes", 10)),
            max_optimization_rounds=int(pipe.get("max_optimization_rounds", 5)),
            func_sweep_count=int(pipe.get("func_sweep_count", 3)),
        )
        target = TargetProfile(
            target_id=_require(targ, "target_id", "target"),
            backend=BackendKind(targ.get("backend", "local")),
            env_setup_commands=tuple(targ.get("env_setup_commands", [])),
            compile_command_template=_require(targ, "compile_command_template", "target"),
            run_command_template=_require(targ, "run_command_template", "target"),
            fortran_compile_command=_require(targ, "fortran_compile_command", "target"),
            profiler=ProfilerKind(targ.get("profiler", "none")),
            profiler_command_template=targ.get("profiler_command_template", ""),
            wallclock_limit=float(targ.get("wallclock_limit", 30)),
            scheduler_directives=tuple(targ.get("scheduler_directives", [])),
            submit_command_template=targ.get("submit_command_template", ""),
            status_command_template=targ.get("status_command_template", ""),
            collect_command_template=targ.get("collect_command_template", ""),
            poll_interval_seconds=float(targ.get("poll_interval_seconds", 5)),
        )
        model_ref = ModelRef(
            name=model["name"],
            endpoint=model.get("endpoint", "https://api.openai.com/v1"),
            price_in_per_mtok=float(model.get("price_in_per_mtok", 0)),
            price_out_per_mtok=float(model.get("price_out_per_mtok", 0)),
            api_key_env=model.get("api_key_env", "OPENAI_API_KEY"),
        )
        injection = InjectionSpec(
            kernel_id=pipe["kernel_id"],
            anchor=_require(inject, "anchor", "injection"),
            capture_snippet=_require(inject, "capture_snippet", "injection"),
            output_csv_name=inject.get("output_csv_name", "capture.csv"),
            comment_prefix=inject.get("comment_prefix", "//"),
            rule=CompareRule(inject.get("rule", "elementwise_tol")),
            tolerance=float(inject.get("tolerance", 1e-6)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"invalid config {path}: {exc}") from exc

    fortran_path = Path(_require(data, "fortran_source", str(path)))
    store = data.get("transcript_store")
    prompts = data.get("prompts_dir")
    return RunConfig(
        pipeline=pipeline,
        target=target,
        model=model_ref,
        injection=injection,
        fortran_source_path=fortran_path,
        transcript_store=Path(store) if store else None,
        prompts_dir=Path(prompts) if prompts else None,
        baseline_run_template=targ.get("baseline_run_template"),
    )
