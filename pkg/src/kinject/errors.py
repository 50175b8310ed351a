"""Exception types shared across the package."""


class KInjectError(Exception):
    """Base class for all package errors."""


class ShapeError(KInjectError, ValueError):
    pass


class UsageError(KInjectError, RuntimeError):
    pass


class ConfigError(KInjectError, ValueError):
    pass


class DataError(KInjectError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message, lineno=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.lineno = lineno
        self.path = path


class ConsistencyError(KInjectError, ValueError):
    pass
