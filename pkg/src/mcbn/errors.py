"""Exception hierarchy shared by all modules."""


class MCBNError(Exception):
    """Base class for errors raised by this package."""


class DomainError(MCBNError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DimensionError(MCBNError, ValueError):
    """Array shapes are inconsistent."""


class NumericError(MCBNError, ArithmeticError):
    """A numeric routine failed (non-finite value, non-convergence)."""


class ContractError(MCBNError, RuntimeError):
    """An API precondition about object state was violated."""


class TrainingError(MCBNError, RuntimeError):
    """Training diverged."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class EdgeSolutionWarning(UserWarning):
    """A 1-D search ended on the edge of its search interval."""
