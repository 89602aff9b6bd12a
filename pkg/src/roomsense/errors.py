"""Exception types shared across the package."""


class RoomsenseError(Exception):
    """Base class for all library errors."""


class SchemaError(RoomsenseError):
    """Malformed header, unknown channel, or mismatched column contract."""


class ParseError(RoomsenseError):
    """Unparseable cell, addressed by row and column."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class IntegrityError(RoomsenseError):
    """Data violates a structural invariant (e.g. duplicate timestamps)."""


class ConfigError(RoomsenseError):
    """Invalid configuration value or unknown configuration key."""


class SplitError(RoomsenseError):
    """Requested split cannot give every part at least one element."""


class DegenerateDataError(RoomsenseError):
    """Zero-variance variable, all-missing channel, or rank-0 feature matrix."""


class ShapeError(RoomsenseError):
    """Array shapes do not conform to the operation's contract."""


class TrainingDivergedError(RoomsenseError):
    """Non-finite loss or gradient encountered during training."""

    def __init__(self, message: str, epoch: int | None = None, buffer: str | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.buffer = buffer
