"""Exception hierarchy shared across the pipeline."""


class KernelPortError(Exception):
    """Base class for all pipeline errors."""


class ConfigInvalid(KernelPortError):
    pass


class BudgetExhausted(KernelPortError):
    """A fix budget was spent without the stage succeeding.

    Carries the stage name ("validate", "compile", "runtime",
    "functionality") and the version number that was being produced.
    """

    def __init__(self, stage: str, version: int, budget: int):
        self.stage = stage
        self.version = version
        self.budget = budget
        super().__init__(
            f"{stage} budget of {budget} fix attempts exhausted at version {version}"
        )


# --- model gateway ---

class ProviderUnavailable(KernelPortError):
    pass


class RateLimited(KernelPortError):
    pass


class MalformedResponse(KernelPortError):
    pass


# --- agent roles ---

class MissingContextKey(KernelPortError):
    pass


class NoChangeProduced(KernelPortError):
    """A fixer returned code identical to its input."""


# --- execution backends ---

class ExecutorFailure(KernelPortError):
    """Infrastructure failure (scheduler, filesystem), not a program failure."""


class SchedulerUnavailable(ExecutorFailure):
    pass


class JobTimeout(ExecutorFailure):
    pass


class IoFailure(KernelPortError):
    pass


# --- functional testing ---

class AnchorMissing(KernelPortError):
    pass


class AnchorAmbiguous(KernelPortError):
    pass


class UnbalancedMarkers(KernelPortError):
    pass


class LengthMismatch(KernelPortError):
    pass


class CsvParseError(KernelPortError):
    pass


class MissingCsv(KernelPortError):
    pass


# --- performance models ---

class UnknownKernel(KernelPortError):
    pass


class NonPositiveTime(KernelPortError):
    pass


# --- reporting ---

class MissingData(KernelPortError):
    pass
