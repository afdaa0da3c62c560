"""
Exception hierarchy.

Every error raised on purpose by the package derives from
``ConsequentialError`` and carries the process exit code the CLI reports.
"""

from typing import Iterable, Optional


class ConsequentialError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(ConsequentialError):
    """Invalid configuration: unknown keys, out-of-range values, bad presets."""

    exit_code = 2

    def __init__(self, message: str, problems: Optional[Iterable[str]] = None):
        self.problems = list(problems or [])
        if self.problems:
            message = message + "\n" + "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(message)


class ConditionalUnavailableError(ConfigError):
    """The environment cannot report P(y=1|x,s)."""


class IngestionError(ConsequentialError):
    """A dataset, score table or metrics file could not be read."""

    exit_code = 3


class NumericalError(ConsequentialError):
    """A computation produced non-finite values or cannot proceed."""

    exit_code = 4


class ExplorationError(NumericalError):
    """A labeled example carries a zero propensity."""
