"""Exception taxonomy shared across the package."""

from __future__ import annotations


class PunchlineError(Exception):
    """Base class for all package errors."""


class InputError(PunchlineError):
    """An operation was handed inputs that violate its contract."""


class DatasetError(PunchlineError):
    """A dataset file is malformed. Carries the offending line number."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class BackendError(PunchlineError):
    """A model backend failed to produce a usable result."""


class TransportError(BackendError):
    """An HTTP backend gave up after the configured number of attempts."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempt(s))")
        self.attempts = attempts


class GenerationError(PunchlineError):
    """A generation step produced no usable text for an episode."""


class ScoringError(PunchlineError):
    """Every scoring call needed by a selection step failed."""


class TemplateError(PunchlineError):
    """A prompt template is missing or was rendered with an incomplete map."""


class UnscorableError(PunchlineError):
    """An evaluation instance cannot be scored (empty decomposition)."""
