"""Exception types shared across the package."""


class RawNoiseError(Exception):
    """Base class for all package-specific errors."""


class FormatError(RawNoiseError, ValueError):
    """A file or payload failed to parse; the message names the offending field."""


class GeometryError(RawNoiseError, ValueError):
    """Frame/clip/pattern dimensions are inconsistent."""


class DomainError(RawNoiseError, ValueError):
    """An operation received data in the wrong value domain (clipped vs residual)."""


class CalibrationError(RawNoiseError, RuntimeError):
    """A calibration stage cannot proceed (singular fit, missing data, ...)."""


class DivergenceError(CalibrationError):
    """The adversarial refinement produced a non-finite loss.

    Carries the last finite parameter iterate so callers can still emit a report.
    """

    def __init__(self, message, last_params=None):
        super().__init__(message)
        self.last_params = last_params
