"""Exception hierarchy shared by every stage.

Each class carries the process exit code the CLI maps it to.
"""


class PrismError(Exception):
    exit_code = 1


class ConfigError(PrismError, ValueError):
    exit_code = 2


class DataError(PrismError, ValueError):
    exit_code = 3


class DimensionError(DataError):
    """Operand shapes do not conform."""


class NumericError(PrismError, ArithmeticError):
    exit_code = 4


class PrismIOError(PrismError, OSError):
    exit_code = 5
