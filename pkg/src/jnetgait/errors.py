"""Exception types shared across the pipeline.

The CLI maps each family to a distinct exit code.
"""


class ConfigError(ValueError):
    """Invalid parameters, shapes or run configuration."""


class FormatError(ValueError):
    """A file does not follow its documented layout."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class DataError(FormatError):
    """Well-formed file carrying unusable values (NaN, inf)."""


class NumericalError(FloatingPointError):
    """Training produced a non-finite loss or gradient."""
