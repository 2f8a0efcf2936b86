"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(ValueError):
    """A required parameter is missing or inconsistent."""


class ShapeError(ValueError):
    """Array arguments have incompatible dimensions."""


class ReconstructionError(ArithmeticError):
    """The sample-mean reconstruction is undefined (a scale factor is zero)."""
