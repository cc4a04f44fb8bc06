"""Exception hierarchy shared across the package.

Everything raised deliberately by this library derives from RetroGanError so
callers (and the CLI) can distinguish expected failure modes from genuine bugs.
"""


class RetroGanError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(RetroGanError):
    """Operands have incompatible dimensions."""


class DegenerateVectorError(RetroGanError):
    """A vector with (near-)zero norm was passed where a direction is required."""

    def __init__(self, message, row=None, word=None):
        super().__init__(message)
        self.row = row
        self.word = word


class DomainError(RetroGanError):
    """A numeric argument lies outside the mathematically valid domain."""


class ConfigError(RetroGanError):
    """Invalid configuration value or unknown configuration key."""


class DataError(RetroGanError):
    """Malformed data encountered while reading an input file."""


class ParseError(DataError):
    """A specific line of an input file could not be parsed."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class VocabularyError(RetroGanError):
    """A word was requested that is not present in the table."""


class AlignmentError(RetroGanError):
    """Two embedding tables share no usable vocabulary."""


class CheckpointError(RetroGanError):
    """A checkpoint file is missing, truncated, or inconsistent."""


class InvalidStateError(RetroGanError):
    """An operation was invoked on an object in the wrong mode or lifecycle state."""


class InsufficientConfoundersError(RetroGanError):
    """The batch is too small to draw the requested number of confounders."""


class UndefinedCorrelationError(RetroGanError):
    """Rank correlation is undefined (fewer than two points or zero variance)."""
