"""Exception types shared across the package.

Each class carries the CLI exit code it maps to.
"""


class ManifoldRepairError(Exception):
    exit_code = 1


class InvalidInputError(ManifoldRepairError, ValueError):
    exit_code = 2


class InsufficientDataError(InvalidInputError):
    pass


class ParseError(InvalidInputError):
    """Malformed file or document. ``location`` is a line number, byte offset or JSON pointer."""

    def __init__(self, message, location=None, path=None):
        self.location = location
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if location is not None:
            where += f" at {location}" if where else f"at {location}"
        super().__init__(f"{where}: {message}" if where else message)


class NumericalAbort(ManifoldRepairError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, point_index=None, iteration=None):
        self.point_index = point_index
        self.iteration = iteration
        super().__init__(message)


class IOFailure(ManifoldRepairError, OSError):
    """A file could not be read or written."""

    exit_code = 4
