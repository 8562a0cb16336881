"""Exception hierarchy shared by every module of the package."""


class AggringError(Exception):
    """Base class for all package errors."""


class DomainError(AggringError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class RangeError(DomainError):
    """A point lies outside the range where a particular method is reliable."""


class ConvergenceError(AggringError, ArithmeticError):
    """An iterative method failed to converge; ``best`` holds the last estimate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ExcludedPointError(DomainError):
    """Evaluation requested exactly at a point the operation excludes."""


class ContractError(AggringError):
    """A caller violated an operation's precondition."""


class SolveError(AggringError, ArithmeticError):
    """A linear system could not be solved (singular matrix)."""


class SearchError(AggringError):
    """A parameter search exhausted its cap without finding a witness."""


class IntegrationError(AggringError):
    """Time integration failed; ``trajectory`` holds the partial result."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory
