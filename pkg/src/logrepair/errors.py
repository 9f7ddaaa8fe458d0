"""Exception hierarchy shared across the package."""


class LogRepairError(Exception):
    """Base class for every error this package raises deliberately."""


class ParseError(LogRepairError):
    """Input data is malformed (CSV rows, XES documents, timestamps)."""


class ConfigurationError(LogRepairError):
    """A mapping or configuration value does not fit the input."""


class CapacityError(LogRepairError):
    """A corruption request asks for more removals than the log can host."""


class ConsistencyError(LogRepairError):
    """A ledger does not line up with the log it is applied to."""


class EncodingError(LogRepairError):
    """A label, value, or id falls outside the vocabulary."""


class TrainingError(LogRepairError):
    """The training set is unusable (too small or single-class)."""


class StatisticsError(LogRepairError):
    """Batch statistics are undefined (fewer than two rows)."""


class ShapeError(LogRepairError):
    """Tensor shapes do not match a layer's parameters."""


class CheckpointError(LogRepairError):
    """A stored checkpoint disagrees with its architecture descriptor."""
