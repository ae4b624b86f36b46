"""Exception hierarchy shared by the simulator, the engines, and the CLI."""


class FaasflowError(Exception):
    """Base class for every error raised by this package."""


# --- runtime-core errors ---------------------------------------------------

class DuplicateName(FaasflowError):
    """A function with this name is already registered."""


class UnknownFunction(FaasflowError):
    """Invocation of a name that is not in the registry."""


class PayloadTooLarge(FaasflowError):
    """Input payload exceeds the platform or per-function limit."""

    def __init__(self, size: int, limit: int):
        super().__init__(f"payload of {size} bytes exceeds limit of {limit} bytes")
        self.size = size
        self.limit = limit


class NotRunning(FaasflowError):
    """suspend() called on an invocation that is not running, or not by itself."""


class SuspendLimitExceeded(FaasflowError):
    """An invocation stayed suspended longer than the configured maximum."""


class LivelockGuard(FaasflowError):
    """The event loop executed more actions than the configured budget."""


class FunctionFailed(FaasflowError):
    """A simulated function raised a fault; carries the failed record."""

    def __init__(self, record, message: str = ""):
        super().__init__(message or f"function {record.function!r} failed")
        self.record = record


class SimulatedFault(FaasflowError):
    """Fault raised from inside a scripted behavior."""


# --- workflow-model errors -------------------------------------------------

class InvalidCount(FaasflowError):
    """Repeat / fan-out width below one."""


class ParseError(FaasflowError):
    """Workflow document is not syntactically valid."""

    def __init__(self, message: str, position: int = -1):
        if position >= 0:
            message = f"{message} (at offset {position})"
        super().__init__(message)
        self.position = position


class ValidationError(FaasflowError):
    """Workflow document is well formed but violates a structural rule."""


class UnsupportedState(FaasflowError):
    """State machine uses a construct the compiler does not accept."""


# --- engine errors ---------------------------------------------------------

class EngineError(FaasflowError):
    """Base class for errors raised while an engine runs a workflow."""


class StateTooLarge(EngineError):
    """Payload crossing a transition exceeds the engine state limit."""

    def __init__(self, size: int, limit: int):
        super().__init__(f"state of {size} bytes exceeds engine limit of {limit} bytes")
        self.size = size
        self.limit = limit


class RateLimited(EngineError):
    """Transition rate exceeded the engine's token bucket."""


class TooManyActions(EngineError):
    """Composition exceeds the engine's action limit."""

    def __init__(self, count: int, limit: int):
        super().__init__(f"composition has {count} actions, limit is {limit}")
        self.count = count
        self.limit = limit


class ParallelUnsupported(EngineError):
    """Engine cannot execute parallel branches."""


class NondeterminismDetected(EngineError):
    """A replay scheduled different work than the recorded history."""


class CompositionNotRegistrable(EngineError):
    """The engine cannot expose its compositions as platform functions."""


class WorkflowFailed(EngineError):
    """A task failed and no retry policy absorbed it."""


# --- accounting / benchmark errors ------------------------------------------

class IncompleteTrace(FaasflowError):
    """Trace lacks the records needed to compute a metric."""


class ConfigError(FaasflowError):
    """Profile or suite configuration file is invalid."""
