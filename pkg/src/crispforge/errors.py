"""Error hierarchy.

Every error carries a machine-readable ``code`` (e.g. ``"CAPACITY"``) and
belongs to one of four classes that the CLI maps onto exit codes.
"""

from __future__ import annotations


class CrispError(Exception):
    """Base class; ``code`` names the failure, ``exit_code`` its CLI class."""

    exit_code = 3

    def __init__(self, code: str, message: str = "") -> None:
        self.code = code
        self.message = message or code
        super().__init__(f"{code}: {self.message}")


class ConfigError(CrispError):
    """Validation or configuration failure."""

    exit_code = 1


class DataError(CrispError):
    """Runtime failure caused by data, parameters or a learner."""

    exit_code = 3


class CapacityError(CrispError):
    """Requested analysis exceeds the enumeration bound."""

    exit_code = 4

    def __init__(self, message: str = "") -> None:
        super().__init__("CAPACITY", message)


class ModelError(ConfigError):
    """A feature model violates a structural invariant."""
