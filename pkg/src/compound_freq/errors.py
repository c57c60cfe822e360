"""Exception hierarchy shared by all modules."""


class CompoundFreqError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CompoundFreqError, ValueError):
    """Grid or scheme parameters are inconsistent (e.g. delay not on the grid)."""


class DomainError(CompoundFreqError, ValueError):
    """An argument lies outside the domain of the operation."""


class ContractError(CompoundFreqError, ValueError):
    """A caller-side precondition was violated."""


class NumericError(CompoundFreqError, ArithmeticError):
    """An iterative method failed to converge."""

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class BoundaryError(CompoundFreqError):
    """A characteristic root lies on (or too close to) a contour."""


class IncompleteSpectrumError(CompoundFreqError):
    """Newton iteration did not recover every root; carries partial results."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class VerificationError(CompoundFreqError):
    """Newton roots and the argument-principle count disagree."""

    def __init__(self, message: str, found: int, counted: int, partial=None):
        super().__init__(message)
        self.found = found
        self.counted = counted
        self.partial = partial


class InsufficientSpectrumError(CompoundFreqError):
    """Fewer than m roots are known and completeness cannot be established."""


class PreconditionError(CompoundFreqError, ValueError):
    """A model-level hypothesis does not hold (e.g. 2*alpha*tau >= 1)."""


class BracketError(CompoundFreqError):
    """Bisection bracket does not enclose a sign change."""


class NotFoundError(CompoundFreqError):
    """A scanned quantity was not located in the search range."""
