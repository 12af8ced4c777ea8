"""Exception types shared across the package."""


class ClimberError(Exception):
    """Base class for all climber errors."""


class InputError(ClimberError, ValueError):
    """Invalid argument values: length mismatches, empty inputs, bad ranges."""


class ConfigError(ClimberError, ValueError):
    """Invalid configuration parameters."""


class BuildError(ClimberError):
    """Index construction cannot proceed."""


class QueryError(ClimberError):
    """Query cannot be answered against the given index."""


class StorageError(ClimberError, IOError):
    """File-level failure: missing, unreadable, or unwritable artifacts."""


class ParseError(StorageError):
    """Malformed on-disk artifact."""

    def __init__(self, message: str, path=None, location=None):
        self.path = path
        self.location = location
        where = ""
        if path is not None:
            where += f" [{path}"
            if location is not None:
                where += f": {location}"
            where += "]"
        super().__init__(message + where)
