"""Typed errors shared across the package.

The CLI maps these onto distinct exit codes, so raising the right class
matters more than the message text.
"""


class ReldpError(Exception):
    """Base class for package errors."""


class EdgeListParseError(ReldpError):
    """Malformed edge-list or feature input; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CapacityError(ReldpError):
    """Without-replacement draw asked for more distinct nodes than exist."""


class NumericError(ReldpError):
    """A numeric routine failed to reach its required tolerance.

    ``achieved`` records the best relative tolerance the routine reached
    before giving up, so callers can report how far off it was.
    """

    def __init__(self, message: str, achieved: float | None = None):
        self.achieved = achieved
        if achieved is not None:
            message = f"{message} (achieved tolerance {achieved:.3e})"
        super().__init__(message)


class CalibrationError(ReldpError):
    """Noise calibration could not hit the target within the search bracket."""


class EnumerationOverflowError(ReldpError):
    """A combinatorial enumeration would exceed the configured cap."""
