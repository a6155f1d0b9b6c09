"""Error hierarchy, one class per CLI exit code."""


class PluripotError(Exception):
    """Base class; carries the CLI exit code for its category."""

    exit_code = 1


class ValidationError(PluripotError):
    """Bad input: malformed scenario, contract violation, unsupported value."""

    exit_code = 2


class HypothesisError(PluripotError):
    """A theorem hypothesis fails on the given data (boundary condition,
    ordering, equality off E, missing subsolution, no tv decay)."""

    exit_code = 3


class ConvergenceError(PluripotError):
    """An iterative solver did not reach its tolerance within budget."""

    exit_code = 4

    def __init__(self, message, residual=None, sweeps=None):
        super().__init__(message)
        self.residual = residual
        self.sweeps = sweeps


class AssertionFailure(PluripotError):
    """A numerical check that the scenario asserts came out false."""

    exit_code = 5
