"""Exception types shared across the package."""


class XlaneError(Exception):
    """Base class for all package errors."""


class ShapeError(XlaneError, ValueError):
    """An array does not have the width/shape the operation requires."""


class ValidationError(XlaneError, ValueError):
    """A domain object violates its invariants (malformed window, bad payload)."""


class NumericError(XlaneError, ArithmeticError):
    """A non-finite value appeared; the message names the site."""


class DivisionHazardError(NumericError):
    """A relevance split would divide by an exactly-zero denominator with epsilon=0."""


class WindowNotReady(XlaneError):
    """Not enough history yet to assemble an observation window; retry later."""


class FrameParseError(XlaneError, ValueError):
    """A recorded frame stream is corrupt; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class TrainingDiverged(XlaneError, RuntimeError):
    """Training loss became non-finite; carries diagnostics."""
