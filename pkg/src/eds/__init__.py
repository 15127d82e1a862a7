"""Economic denial gateway: client puzzles, decoys, temporal stretching and
bandwidth taxation, with an attack simulator and cost models."""

from .config import EdsConfig, preset
from .errors import ConfigError, DomainError, EdsError
from .gateway import Gateway

__all__ = ["ConfigError", "DomainError", "EdsConfig", "EdsError", "Gateway", "preset"]
__version__ = "0.1.0"
