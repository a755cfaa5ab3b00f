"""
Module: Settings Manager

This module defines a SettingsManager class that abstracts the retrieval of runtime settings
that come from the environment rather than from scenario files.
"""
import os
from dotenv import load_dotenv

from errors import ConfigError

THREADS_VARIABLE = "LOB_ARENA_THREADS"


class SettingsManager:
    """
    A class to retrieve runtime settings from environment variables.

    This class abstracts away the source of the environment variables, providing
    a single point of retrieval for settings such as the parallelism cap.
    """

    def __init__(self):
        """
        Initializes the SettingsManager and loads the environment variables.
        """
        load_dotenv()  # Load environment variables from a .env file, if present

    def get_setting(self, key: str, default: str | None = None) -> str:
        """
        Retrieves a setting using its key.

        Args:
            key (str): The environment variable name.
            default (str | None): Value returned when the variable is unset.
        """
        value = os.getenv(key, default)
        if value is None:
            raise ConfigError(f"Setting '{key}' not found.", field=key)
        return value

    def max_workers(self) -> int:
        """
        Returns the parallelism cap from LOB_ARENA_THREADS.

        Returns:
            int: A positive worker count, 1 when the variable is unset.
        """
        raw = self.get_setting(THREADS_VARIABLE, "1")
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"expected a positive integer, got '{raw}'", field=THREADS_VARIABLE)
        if value < 1:
            raise ConfigError(f"expected a positive integer, got '{raw}'", field=THREADS_VARIABLE)
        return value
