"""Exception hierarchy shared by the solvers, the simulator and the CLI."""


class AltQueueError(Exception):
    """Base class for all package errors."""


class ModelValidationError(AltQueueError, ValueError):
    """A model or scenario violates one of its invariants."""


class DomainError(AltQueueError, ValueError):
    """An argument lies outside the domain of a function."""


class UndefinedCorrelationError(AltQueueError, ValueError):
    """A correlation was requested for a sequence with zero variance."""


class CapabilityError(AltQueueError):
    """The requested operation is not supported for this model (e.g. sampling)."""


class NumericalFailure(AltQueueError, ArithmeticError):
    """A numerical step (root finding, linear solve) failed."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class RootFindingError(NumericalFailure):
    pass


class DecompositionError(NumericalFailure):
    pass


class SolutionRejected(NumericalFailure):
    """A computed solution failed its post-solve invariant checks."""
