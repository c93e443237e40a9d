"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates the documented precondition of an operation."""


class ConfigurationError(ValueError):
    """A scenario, quadrature or run configuration cannot be honoured."""


class UndefinedMetricError(ArithmeticError):
    """A figure of merit is undefined for the given probabilities."""
