"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes (DataError -> 3,
NumericError -> 4); library callers catch them like any other exception.
"""


class CloudEdgesError(Exception):
    """Base class for all package errors."""


class DataError(CloudEdgesError):
    """Unusable input data: parse failures, shape mismatches, bad labels."""


class ParseError(DataError):
    """File could not be parsed. Carries the path and a 1-based line number
    (or byte offset for binary payloads) when known."""

    def __init__(self, message, path=None, line=None, offset=None):
        detail = message
        if path is not None:
            detail = f"{path}: {detail}"
        if line is not None:
            detail = f"{detail} (line {line})"
        elif offset is not None:
            detail = f"{detail} (byte offset {offset})"
        super().__init__(detail)
        self.path = path
        self.line = line
        self.offset = offset


class NumericError(CloudEdgesError):
    """Numerical failure: non-finite values, degenerate systems, divergence."""
