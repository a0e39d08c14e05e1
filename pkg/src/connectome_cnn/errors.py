"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class ConnectomeError(Exception):
    exit_code = 1


class ConfigError(ConnectomeError, ValueError):
    """Invalid configuration or argument combination."""

    exit_code = 2


class DataError(ConnectomeError, ValueError):
    """Input data violates a domain invariant."""

    exit_code = 3


class FormatError(DataError):
    """A file does not conform to its declared format."""


class DegenerateSeriesError(DataError):
    """Constant time series where a non-constant one is required."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class InfeasibleBandError(ConfigError):
    """Warping window too narrow for the series lengths."""


class NumericalError(ConnectomeError, ArithmeticError):
    """Non-finite values appeared during training."""

    exit_code = 4
