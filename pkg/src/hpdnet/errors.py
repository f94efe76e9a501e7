"""Exception hierarchy shared by every module."""


class HpdNetError(Exception):
    """Base class for all errors raised by hpdnet."""


class InvalidMatrix(HpdNetError, ValueError):
    """Non-finite, wrongly shaped, or non-Hermitian matrix input."""


class NotPositiveDefinite(HpdNetError, ValueError):
    """A matrix expected to be HPD has an eigenvalue at or below the floor."""


class EmptyInput(HpdNetError, ValueError):
    pass


class DegenerateKernel(HpdNetError, ValueError):
    """Mapping kernel is not full rank."""


class InsufficientSamples(HpdNetError, ValueError):
    def __init__(self, message, class_id=None):
        super().__init__(message)
        self.class_id = class_id


class NoLabels(HpdNetError, ValueError):
    pass


class ShapeError(HpdNetError, ValueError):
    pass


class FormatError(HpdNetError, ValueError):
    """Malformed file; ``offset`` is the byte position where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DivergedLoss(HpdNetError, ArithmeticError):
    pass


class ConfigError(HpdNetError, ValueError):
    """Bad configuration value or unparsable config/spec line."""
