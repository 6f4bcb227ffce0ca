"""Exception hierarchy shared across the package."""


class PkEngineError(Exception):
    """Base class for all errors raised by this package."""


class PkSyntaxError(PkEngineError):
    """Malformed process-knowledge source, with 1-based position info."""

    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class PkValidationError(PkEngineError):
    """Structurally valid process knowledge that violates a contract."""


class EmbeddingError(PkEngineError):
    """Bad embedding input: zero vectors, dim mismatches, missing ids."""


class TrainingError(PkEngineError):
    """Training cannot proceed (empty data, non-finite derivatives, ...)."""


class ReviewConflictError(PkEngineError):
    """Optimistic-concurrency failure: decision based on a stale revision."""

    def __init__(self, message: str, current_revision: int):
        super().__init__(message)
        self.current_revision = current_revision


class ConsistencyError(PkEngineError):
    """An edit whose condition truths do not entail its label."""

    def __init__(self, message: str, trace: list[str]):
        super().__init__(message)
        self.trace = trace


class ReplayError(PkEngineError):
    """Replay fixture miss or malformed fixture file."""


class TransportError(PkEngineError):
    """Completion endpoint unreachable after retries."""
