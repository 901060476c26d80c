"""Exception types shared across the package."""


class EigenlocError(Exception):
    """Base class for all package errors."""


class ParameterError(EigenlocError, ValueError):
    """A parameter is outside the range an operation accepts."""


class DimensionError(ParameterError):
    """A point or field does not belong to the model it is used with."""


class ResolutionError(EigenlocError):
    """The grid or quadrature is too coarse for the requested quantity."""


class CoverageError(EigenlocError):
    """A ball covering leaves grid nodes uncovered."""
