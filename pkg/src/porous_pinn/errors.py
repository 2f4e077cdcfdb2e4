class ConfigurationError(ValueError):
    """Invalid configuration or inconsistent inputs."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class NumericalError(ArithmeticError):
    """A non-finite value appeared during evaluation or training."""


class DomainError(ValueError):
    """Point or time outside the problem domain."""
