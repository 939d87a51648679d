"""Exception types shared across the package."""


class HarnackLabError(Exception):
    """Base class for all errors raised by harnack_lab."""


class DomainError(HarnackLabError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class InputError(HarnackLabError, ValueError):
    """Malformed or inconsistent input (shapes, ranges, missing frames)."""


class NumericError(HarnackLabError, RuntimeError):
    """A numerical procedure failed to reach its tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class ConfigError(HarnackLabError, ValueError):
    """Experiment configuration failed validation.

    ``errors`` is a list of ``(path, message)`` pairs.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        lines = "; ".join(f"{path}: {msg}" for path, msg in self.errors)
        super().__init__(lines or "invalid configuration")
