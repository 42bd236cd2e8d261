"""Exception hierarchy shared by the simulator modules."""


class FlysqError(Exception):
    """Base class for all errors raised by flysq."""


class ConfigError(FlysqError, ValueError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class GeometryError(ConfigError):
    """Channel beams do not fit inside the cell cross-section."""


class DomainError(FlysqError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ParameterError(FlysqError, ValueError):
    """Numerical parameter outside its admissible range."""


class NumericalError(FlysqError, ArithmeticError):
    """A linear solve or integration failed (CLI exit code 3)."""

    def __init__(self, message, condition=None):
        if condition is not None:
            message = f"{message} (condition number {condition:.3e})"
        super().__init__(message)
        self.condition = condition
