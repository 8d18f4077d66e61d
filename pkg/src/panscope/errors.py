"""Exception types shared across the toolkit.

The CLI maps UsageError to exit code 1 and DataError (and subclasses) to
exit code 2; everything else is a bug.
"""


class PanscopeError(Exception):
    """Base class for all toolkit errors."""


class UsageError(PanscopeError):
    """Bad arguments or configuration supplied by the caller."""


class DataError(PanscopeError):
    """Malformed or inconsistent data (files, tensors, samples)."""


class ShapeError(DataError):
    """Tensor/layer shape incompatibility."""


class InvalidPaddingError(DataError):
    """Padding request the policy cannot satisfy (e.g. reflect wider than the map)."""


class DegenerateMapError(DataError):
    """Activation map too small to split into border and centre regions."""


class EmptySampleError(DataError):
    """A statistic was asked of an empty sample."""


class TraceFormatError(DataError):
    """Corrupt or truncated PANTRACE / PANWGT file."""


class ModelFormatError(DataError):
    """Malformed model description file."""


class PlantError(DataError):
    """Planted-kernel construction failed its calibration check."""
