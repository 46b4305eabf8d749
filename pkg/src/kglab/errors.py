"""Exception hierarchy; CLI exit codes hang off these classes."""


class KGLabError(Exception):
    exit_code = 1


class ConfigurationError(KGLabError, ValueError):
    exit_code = 2


class InputError(KGLabError, ValueError):
    exit_code = 2


class DomainError(KGLabError, ValueError):
    exit_code = 2


class BracketError(DomainError):
    pass


class ConvergenceError(KGLabError, RuntimeError):
    exit_code = 3


class SaturationError(KGLabError, FloatingPointError):
    """Exponential nonlinearity evaluated beyond its configured amplitude cap."""

    exit_code = 3

    def __init__(self, message, amplitude=None):
        super().__init__(message)
        self.amplitude = amplitude


class InstabilityError(KGLabError, FloatingPointError):
    exit_code = 3

    def __init__(self, message, last_time=None):
        super().__init__(message)
        self.last_time = last_time


class InconsistencyError(KGLabError):
    """Signs of K disagree across scaling pairs below threshold."""

    exit_code = 4

    def __init__(self, message, k_values=None):
        super().__init__(message)
        self.k_values = dict(k_values or {})


class InvariantViolation(KGLabError, AssertionError):
    exit_code = 4
