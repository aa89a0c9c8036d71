"""Exception hierarchy shared across the package."""


class VacflowError(Exception):
    """Base class for all package errors."""


class DomainError(VacflowError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class DimensionError(VacflowError, ValueError):
    """Tensor or field dimensions do not match."""


class CFLError(VacflowError):
    """Time step violates the stability restriction of the scheme."""


class PositivityError(VacflowError):
    """A density became negative beyond round-off."""


class CharacteristicExit(VacflowError):
    """A forward characteristic left the declared domain."""

    def __init__(self, message, time=None, point=None):
        super().__init__(message)
        self.time = time
        self.point = point


class TangencyError(VacflowError):
    """A characteristic grazes the boundary; the entry time is ambiguous."""


class MissingBoundaryData(VacflowError):
    """A backward characteristic reached the inflow boundary with no boundary density."""


class UnsupportedConfiguration(VacflowError):
    """The requested check is not available for this configuration."""


class ConfigError(VacflowError, ValueError):
    """Invalid experiment configuration."""
