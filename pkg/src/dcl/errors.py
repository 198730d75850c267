"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class AccuracyError(ArithmeticError):
    """A numerical routine could not reach its accuracy target."""


class DegenerateError(ArithmeticError):
    """A closed form hit a vanishing denominator."""


class BracketError(ArithmeticError):
    """A root bracket did not contain a sign change."""


class ConfigError(ValueError):
    """Invalid simulation or experiment configuration."""


class AccuracyWarning(UserWarning):
    """A Monte Carlo estimate is noisier than the advisory threshold."""
