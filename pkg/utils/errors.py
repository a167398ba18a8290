"""
Error types
===========
Every failure the toolkit reports is one of these classes. Each class carries
the process exit status the command-line front end maps it to.
"""


class AtomScanError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 2


class InvalidParameterError(AtomScanError, ValueError):
    """A parameter is outside its allowed range (negative power, bad size...)."""


class OutOfDomainError(AtomScanError, ValueError):
    """A query falls outside the region where a model is valid."""

    def __init__(self, message, site=None):
        super().__init__(message)
        self.site = site


class UnsupportedRegimeError(AtomScanError):
    """The requested parameters leave the regime the model handles."""


class InsufficientSignalError(AtomScanError):
    """Data does not contain the feature an estimator needs."""

    exit_code = 3


class ConvergenceError(AtomScanError):
    """An iterative solver stopped without converging."""

    exit_code = 3

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class ConfigError(AtomScanError):
    """Configuration document is malformed or inconsistent."""

    def __init__(self, message, key=None, line=None):
        where = []
        if key:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.key = key
        self.line = line


class ParseError(AtomScanError):
    """An input table cannot be read."""

    def __init__(self, message, path=None, row=None):
        if row is not None:
            message = f"{message} (row {row})"
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
        self.row = row
