"""Exception hierarchy shared by the library and the CLI.

Each family maps to a CLI exit code: configuration problems exit with 2,
bad or degenerate data with 3, and numerical failures with 4.
"""

from __future__ import annotations


class MsgmmError(Exception):
    """Base class for all errors raised by msgmm."""

    exit_code = 1


class ConfigError(MsgmmError, ValueError):
    """Invalid parameters or configuration file contents."""

    exit_code = 2


class DataError(MsgmmError, ValueError):
    """Input data that cannot be processed (wrong shape, empty, etc.)."""

    exit_code = 3


class DegenerateFitError(DataError):
    """A mixture fit collapsed, e.g. every component was removed."""


class SplitterRejected(DataError):
    """No component of a splitter-segment fit lies close enough to its anchor."""


class NumericalFailure(MsgmmError, ArithmeticError):
    """Non-finite values appeared during fitting; indicates a bug, not bad data."""

    exit_code = 4


class StageError(MsgmmError):
    """Wraps an error raised inside a pipeline stage with its location."""

    def __init__(self, stage: str, cause: MsgmmError, segment: str | None = None):
        self.stage = stage
        self.segment = segment
        self.cause = cause
        self.exit_code = cause.exit_code
        where = f"{stage}" if segment is None else f"{stage} [{segment}]"
        super().__init__(f"{where}: {cause}")
