"""Exception hierarchy shared by the library and the command line.

Each class carries the process exit code the CLI maps it to.
"""


class NtkSketchError(Exception):
    exit_code = 1


class ConfigError(NtkSketchError, ValueError):
    exit_code = 2


class ShapeError(NtkSketchError, ValueError):
    exit_code = 3


class DomainError(NtkSketchError, ValueError):
    exit_code = 3


class DataError(NtkSketchError, ValueError):
    """Malformed input files or datasets."""

    exit_code = 3


class NumericError(NtkSketchError, ArithmeticError):
    exit_code = 4
