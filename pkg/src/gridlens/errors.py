"""Exception types.

Every error that stems from bad user input derives from :class:`InputError`;
the CLI maps those to exit code 2.
"""

from __future__ import annotations


class GridLensError(ValueError):
    """Base class for all errors raised by gridlens."""


class InputError(GridLensError):
    """Invalid input data, parameters or configuration."""


class InvalidRecord(InputError):
    """A record violates one of its invariants. ``reason`` is a short tag."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class SiteMismatch(InputError):
    pass


class MissingField(InputError):
    pass


class HeaderMissing(InputError):
    pass


class EmptyInput(InputError):
    pass


class DuplicateSite(InputError):
    pass


class NonPositiveCapacity(InputError):
    pass


class MalformedInput(InputError):
    pass


class InvalidBins(InputError):
    pass


class NotStarted(InputError):
    pass


class TooFewRows(InputError):
    pass


class SchemaMismatch(InputError):
    pass


class EmptySample(InputError):
    pass


class InfeasibleJob(InputError):
    pass


class InvalidPolicyParams(InputError):
    pass


class NoFeasibleSite(InputError):
    pass


class ConfigError(InputError):
    """Scenario configuration problem; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
