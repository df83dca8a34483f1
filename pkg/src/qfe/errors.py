"""Exception hierarchy shared by every module."""


class QfeError(Exception):
    """Base class for all package errors."""


class ParameterError(QfeError, ValueError):
    """An argument is outside its documented domain."""


class CircuitValidationError(QfeError, ValueError):
    """A circuit violates a structural invariant."""


class EncodingError(QfeError, ValueError):
    """A circuit cannot be encoded, or a tensor cannot be decoded."""


class CapacityError(QfeError):
    """A simulation would exceed a configured qubit limit."""


class ConfigError(QfeError, ValueError):
    """A pipeline or dataset configuration is invalid."""


class DatasetFormatError(QfeError, ValueError):
    """A dataset file is malformed or has an unsupported version."""


class SpecError(QfeError, ValueError):
    """A network specification has incompatible layer shapes."""


class TrainingError(QfeError, RuntimeError):
    """Training diverged (non-finite loss)."""
