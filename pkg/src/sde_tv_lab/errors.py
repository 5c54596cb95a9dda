"""Exception types shared across the lab.

The CLI maps each family to an exit code: configuration problems exit 2,
violated preconditions exit 3 and numerical failures exit 4.
"""


class LabError(Exception):
    exit_code = 1


class ConfigError(LabError, ValueError):
    exit_code = 2


class ParameterError(ConfigError):
    """A model or operation received an invalid numeric parameter."""


class PreconditionError(LabError):
    exit_code = 3


class SolverError(LabError):
    exit_code = 4


class FitError(SolverError):
    """Log-log fit impossible, usually because a distance underflowed to 0."""


class UsageError(LabError, ValueError):
    """An operation was called with inconsistent arguments."""

    exit_code = 2
