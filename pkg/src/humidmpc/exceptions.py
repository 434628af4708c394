"""Exception hierarchy shared across the package."""


class HumidMpcError(Exception):
    """Base class for all package errors."""


class DomainError(HumidMpcError, ValueError):
    """An input lies outside the domain where a formula is valid."""

    def __init__(self, field, value, message=None):
        self.field = field
        self.value = value
        super().__init__(message or f"{field}={value!r} is outside the valid domain")


class NumericError(HumidMpcError, ArithmeticError):
    """An iterative or factorization routine failed to produce a result."""


class IdentificationError(HumidMpcError):
    """Envelope identification could not produce a physically valid fit."""

    def __init__(self, message, columns=()):
        self.columns = tuple(columns)
        super().__init__(message)


class FitError(HumidMpcError):
    """A performance-map fit was rejected."""


class DataError(HumidMpcError, ValueError):
    """Input data violate a documented schema or physical constraint."""


class UsageError(HumidMpcError, ValueError):
    """An API was called inconsistently (wrong shapes, missing arguments)."""


class InfeasibleError(HumidMpcError):
    """A linear program has no feasible point.

    ``certificate`` holds a Farkas multiplier vector over the original
    constraint rows and ``rows`` names the constraints it combines.
    """

    def __init__(self, message, certificate=None, rows=()):
        self.certificate = certificate
        self.rows = tuple(rows)
        super().__init__(message)


class UnboundedError(HumidMpcError):
    """A linear program's objective is unbounded below."""


class TuningError(HumidMpcError):
    """Every candidate in a price sweep failed."""


class MetricError(HumidMpcError, ValueError):
    """A metric is undefined for the supplied data."""
