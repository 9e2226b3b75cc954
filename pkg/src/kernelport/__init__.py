"""kernelport: an agentic pipeline that ports legacy Fortran kernels to
portable parallel C++, then builds, runs, tests, profiles, and
iteratively optimizes them under bounded repair budgets."""

from .errors import (
    AnchorAmbiguous,
    AnchorMissing,
    BudgetExhausted,
    ConfigInvalid,
    ExecutorFailure,
    KernelPortError,
    MissingContextKey,
    NoChangeProduced,
    NonPositiveTime,
    ProviderUnavailable,
    UnbalancedMarkers,
    UnknownKernel,
)
from .executors import JobOutcome, TargetProfile, build_program, compile_baseline, run_program
from .functest import (
    CompareRule,
    FunctionalityReport,
    InjectionSpec,
    compare_outputs,
    inject_capture,
    run_equivalence,
    strip_injection,
)
from .gateway import (
    CompletionResult,
    Gateway,
    ModelRef,
    ReplayProvider,
    RecordingProvider,
    TokenLedger,
    TokenUsage,
    compute_cost,
    extract_code_block,
)
from .perfmodel import (
    IterationPolicy,
    RooflinePoint,
    flops,
    gflops,
    roofline_point,
    scaled_iterations,
)
from .pipeline import (
    CodeVersion,
    Pipeline,
    PipelineConfig,
    PipelineResult,
    RunSummaryRow,
    VersionStore,
    append_summary_row,
    run_pipeline,
)
from .profiling import (
    OptPoint,
    ProfileDiagnostics,
    evaluate_thresholds,
    parse_opt_points,
    synthesize_summary,
)
from .roles import Agents, Role, RoleSpec, ValidationVerdict, render_prompt

__version__ = "0.1.0"
