class EdsError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(EdsError, ValueError):
    """Invalid configuration or key material."""


class DomainError(EdsError, ValueError):
    """An input lies outside the domain of a model function."""
