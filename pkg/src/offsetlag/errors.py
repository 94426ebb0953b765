"""Exception hierarchy shared by all modules."""


class OffsetLagError(Exception):
    """Base class for every error raised by this package."""


class DomainError(OffsetLagError, ValueError):
    """An argument lies outside the domain of the operation."""


class InvariantViolation(OffsetLagError):
    """A state invariant (e.g. offset <= s(t)) does not hold."""


class UnplacedPeerError(OffsetLagError):
    """A derived quantity was requested from a peer with no offset yet."""


class UndefinedRatioError(OffsetLagError, ZeroDivisionError):
    """A ratio with a zero denominator was requested."""


class NoReferenceError(OffsetLagError):
    """Placement was attempted without a usable reference buffer message."""


class TraceCorruptionError(OffsetLagError):
    """A trace is internally inconsistent (e.g. broken ancestry)."""


class TraceFormatError(OffsetLagError):
    """A trace file line could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class SchemaVersionError(OffsetLagError):
    """A trace declares a schema version this build does not understand."""
