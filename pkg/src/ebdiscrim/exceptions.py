"""Exception hierarchy shared across the package."""


class EBDiscrimError(Exception):
    """Base class for all package errors."""


class DomainError(EBDiscrimError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ValidationError(EBDiscrimError, ValueError):
    """Input data failed validation (bad CSV rows, malformed config, ...)."""


class SolverError(EBDiscrimError, RuntimeError):
    """A numerical solver failed without an infeasibility certificate."""


class UndefinedEstimandError(EBDiscrimError, ArithmeticError):
    """A ratio estimand is 0/0: the conditioning event has probability zero."""
