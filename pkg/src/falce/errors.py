"""Exception types shared across the package.

Every error deliberately raised by this package derives from
:class:`FalceError`, so callers (and the command line driver) can tell
our failures apart from genuine bugs.
"""


class FalceError(Exception):
    """Base class for all errors raised by this package."""


class ImageIOError(FalceError):
    """An image file could not be read, decoded, or written."""


class CsvFormatError(FalceError):
    """A CSV input violates its declared schema.

    Carries the offending file and 1-based line number so batch tools can
    point at the exact record.
    """

    def __init__(self, path, line, reason):
        self.path = str(path)
        self.line = int(line)
        self.reason = reason
        super().__init__(f"{self.path}:{self.line}: {reason}")


class NumericsError(FalceError):
    """A numeric procedure has no defined result for the given input."""
