"""Shared exception types.

The command line maps these onto exit codes: validation problems exit 1,
numeric failures exit 2, file format and IO trouble exit 3.
"""


class ShapeError(ValueError):
    """An array had the wrong shape or an argument failed validation."""


class ConfigError(ValueError):
    """A configuration value is out of its documented range."""


class NumericError(ArithmeticError):
    """A computation produced NaN/Inf or a gradient check failed."""


class FormatError(ValueError):
    """A serialized artifact (tensor file, dataset, checkpoint) is malformed.

    ``record_index`` points at the offending record when the error comes from
    a record stream, so callers can report how far a truncated file was intact.
    """

    def __init__(self, message, record_index=None):
        super().__init__(message)
        self.record_index = record_index
