"""Exception types shared across the package."""


class MrTranslateError(Exception):
    """Base class for all mrtranslate errors."""


class NotFoundError(MrTranslateError, FileNotFoundError):
    """A referenced file, session, or record does not exist."""


class FormatError(MrTranslateError):
    """A file is not in a supported format or has a corrupt header/body."""


class BoundsError(MrTranslateError, IndexError):
    """An index lies outside the valid range."""


class DegenerateImageError(MrTranslateError):
    """An image has zero variance (or zero range) where variation is required."""


class ConfigError(MrTranslateError, ValueError):
    """An invalid configuration value or combination was supplied."""


class ShapeError(MrTranslateError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class UnsupportedOperationError(MrTranslateError):
    """The operation is not defined for this model kind."""


class NumericalError(MrTranslateError):
    """A computation produced NaN/Inf where finite values are required."""


class OrderViolationError(MrTranslateError):
    """A rating was submitted out of order or twice for the same item."""


class SessionCompleteError(MrTranslateError):
    """The study session has no remaining items."""


class EmptySessionError(MrTranslateError):
    """The study session has no ratings to score."""
