"""Exception hierarchy and CLI exit codes."""


class TryonError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InputError(TryonError):
    """Rejected input: bad dimensions, unreadable file, invalid value range."""

    exit_code = 1


class ConfigError(TryonError):
    """Invalid or inconsistent configuration."""

    exit_code = 2


class BackendError(TryonError):
    """A perception backend is unavailable or failed; distinct from 'no person'."""

    exit_code = 3


class EmptyDatasetError(InputError):
    """Dataset build produced zero usable records."""


class TrainingDiverged(TryonError):
    """Non-finite loss encountered during training."""
