"""Exception types shared across the package."""


class RankQPError(Exception):
    """Base class for all package errors."""


class ValidationError(RankQPError, ValueError):
    """Malformed problem data: shape mismatch, bad parameter range, etc."""


class DomainError(RankQPError, ValueError):
    """A point lies on or outside the boundary of a barrier domain."""


class SolverError(RankQPError, RuntimeError):
    """The solver could not make progress (singular system, iteration cap)."""


class InvariantViolation(RankQPError, RuntimeError):
    """A theory-mode invariant failed; indicates a bug or bad parameters."""


class ParseError(RankQPError, ValueError):
    """Invalid input file. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
