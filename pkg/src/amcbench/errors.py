"""Exception hierarchy shared by all amcbench modules."""


class AmcbenchError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(AmcbenchError):
    """Invalid configuration value or incompatible geometry."""


class DataError(AmcbenchError):
    """Malformed or out-of-contract input data (non-finite samples, bad labels)."""


class ShapeError(AmcbenchError):
    """Array shapes do not satisfy an operation's contract."""


class UsageError(AmcbenchError):
    """An API was called out of protocol (e.g. backward on a non-scalar)."""


class TrainingError(AmcbenchError):
    """Numeric failure during optimization (non-finite loss or gradient)."""


class StratificationError(ConfigurationError):
    """A (class, snr) cell is too small to populate every requested split."""


class UndefinedMetricError(DataError):
    """A metric is undefined for the given predictions (e.g. single-class ROC)."""
