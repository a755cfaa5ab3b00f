"""
Module: Errors

Exception hierarchy shared by the simulator, the learning pipeline and the command line.
Every error may carry the name of the offending field so the CLI can report it on one line.
"""

from typing import Optional


class LobArenaError(Exception):
    """
    Base class for all errors raised by lob-arena.

    Attributes:
        field (str | None): The configuration field, flag or input the error refers to.
    """

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field

    def one_line(self) -> str:
        """
        Formats the error as a single machine-parsable line.

        Returns:
            str: A line of the form ``error field=<field> message=<text>``.
        """
        message = " ".join(str(self).split())
        return f"error field={self.field or '-'} message={message}"


class SchedulingError(LobArenaError):
    """Raised when an event is scheduled before the current kernel time."""


class UnknownAgentError(LobArenaError):
    """Raised when a message names an agent the kernel does not know."""


class FundamentalLoadError(LobArenaError):
    """Raised when a fundamental or volume profile file fails validation."""


class DatasetError(LobArenaError):
    """Raised when logs or samples cannot be turned into a dataset."""


class TrainingError(LobArenaError):
    """Raised when training cannot start or diverges."""


class ConfigError(LobArenaError):
    """Raised when a configuration file or flag is invalid."""
