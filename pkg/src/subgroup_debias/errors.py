"""Exception types.

Two families: DataError for malformed or degenerate input (CLI exit code 2)
and NumericalError for estimation failures (CLI exit code 3). UsageError is
raised for bad CLI/config combinations (exit code 1).
"""

from __future__ import annotations

__all__ = [
    "UsageError",
    "DataError",
    "MalformedRow",
    "NonBinaryOutcome",
    "UnknownColumn",
    "EmptyFile",
    "DegenerateCellWarning",
    "NumericalError",
    "SeparationDetected",
    "SingularHessian",
    "NonConvergence",
    "TooManyDiscardedSplits",
    "FoldFailure",
]


class UsageError(Exception):
    """Invalid flag/config combination."""


class DataError(ValueError):
    """Input data violates the format contract."""


class MalformedRow(DataError):
    """A CSV row has the wrong arity or an unparseable field."""

    def __init__(self, row_number, message):
        self.row_number = row_number
        super().__init__(f"row {row_number}: {message}")


class NonBinaryOutcome(DataError):
    """Outcome or treatment value outside {0, 1}."""


class UnknownColumn(DataError):
    """Header declares a column the format does not define."""


class EmptyFile(DataError):
    """No data rows."""


class DegenerateCellWarning(UserWarning):
    """A subgroup-by-treatment cell has fewer than 2 observations."""


class NumericalError(RuntimeError):
    """Estimation failed numerically."""


class SeparationDetected(NumericalError):
    """Refit coefficients diverged; data are (quasi-)separated."""


class SingularHessian(NumericalError):
    """Observed information is singular or numerically rank deficient."""


class NonConvergence(NumericalError):
    """Iteration budget exhausted before reaching tolerance."""


class TooManyDiscardedSplits(NumericalError):
    """More than half of the attempted sample splits failed."""


class FoldFailure(NumericalError):
    """A cross-validation fold could not be estimated."""
