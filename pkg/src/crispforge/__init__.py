"""Variability-aware engine for the modeling phase of a data-mining project."""

from .errors import CapacityError, ConfigError, CrispError, DataError

__version__ = "0.1.0"

__all__ = ["CrispError", "ConfigError", "DataError", "CapacityError", "__version__"]
