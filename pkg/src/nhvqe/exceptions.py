class NHVQEError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(NHVQEError, ValueError):
    """Operands act on incompatible numbers of sites or addresses."""


class ResourceError(NHVQEError, MemoryError):
    """Requested dense object is above the configured size limit."""


class ContractViolation(NHVQEError, ValueError):
    """An input breaks a documented precondition."""


class NumericalDivergenceError(NHVQEError, ArithmeticError):
    """An optimizer iterate produced a non-finite cost or gradient."""

    def __init__(self, message: str, iteration: int | None = None, phase: int | None = None):
        super().__init__(message)
        self.iteration = iteration
        self.phase = phase


class DegenerateOverlapError(NHVQEError, ZeroDivisionError):
    """Left/right overlap too small for a biorthogonal expectation."""


class AmbiguityError(NHVQEError, ValueError):
    """Left and right eigenvalues could not be paired within tolerance."""

    def __init__(self, message: str, unmatched=()):
        super().__init__(message)
        self.unmatched = list(unmatched)


class ConfigError(NHVQEError, ValueError):
    """A run configuration failed validation; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
