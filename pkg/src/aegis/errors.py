"""Exception hierarchy shared across the engine.

Everything raised on purpose derives from AegisError so callers can catch
engine failures without swallowing genuine bugs.
"""

from __future__ import annotations


class AegisError(Exception):
    """Base class for all engine errors."""


class ParseError(AegisError):
    """Malformed input file. Carries enough context to locate the offender."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        detail = message
        if line is not None:
            detail = f"line {line}: {detail}"
        if path is not None:
            detail = f"{path}: {detail}"
        super().__init__(detail)
        self.line = line
        self.path = path


class DataError(AegisError):
    """Input data violates a value-level contract (non-positive price, bad field)."""


class EmptyPanelError(DataError):
    """Price panel ended up with no usable rows or columns."""


class ParameterError(AegisError):
    """Caller passed arguments that violate an operation's contract."""


class DomainError(AegisError):
    """Numeric argument outside the mathematical domain of an operation."""


class EligibilityError(AegisError):
    """A record fails a hard index-eligibility rule."""


class InfeasibleError(AegisError):
    """Constraint set admits no solution (weight caps, asset counts)."""


class SelectionError(AegisError):
    """Basket selection cannot proceed (too few sectors, empty pool)."""


class UndefinedCorrelationError(DataError):
    """Pearson correlation requested for a zero-variance series."""


class FetchError(AegisError):
    """Every requested ticker failed to download."""

    def __init__(self, failures: dict[str, str]):
        self.failures = dict(failures)
        summary = "; ".join(f"{t}: {msg}" for t, msg in sorted(self.failures.items()))
        super().__init__(f"all {len(self.failures)} fetches failed ({summary})")


class ConfigError(AegisError):
    """Run configuration is missing, malformed, or inconsistent."""
