"""Exception hierarchy. The CLI maps each class to an exit code."""


class RieSNEError(Exception):
    """Base class for all errors raised by riesne."""

    exit_code = 1


class InvalidArgumentError(RieSNEError, ValueError):
    """Caller passed arguments outside an operation's contract."""

    exit_code = 2


class DataError(RieSNEError, ValueError):
    """Input data is malformed or violates manifold invariants."""

    exit_code = 3


class DomainError(DataError):
    """A geometric operation is undefined for the given points (e.g. antipodes)."""


class NumericalError(RieSNEError, ArithmeticError):
    """A numerical routine failed (eigen-solve, non-finite iterate, ...)."""

    exit_code = 4
