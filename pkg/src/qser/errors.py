"""Exception hierarchy.

The CLI maps these onto exit codes: DataError -> 2, NumericsError -> 3,
CompatibilityError -> 4.
"""


class QserError(Exception):
    """Base class for every error raised by this package."""


class DomainError(QserError, ValueError):
    pass


class InputError(QserError, ValueError):
    pass


class ConfigError(QserError, ValueError):
    pass


class ShapeError(QserError, ValueError):
    pass


class StateError(QserError, RuntimeError):
    pass


class NumericsError(QserError, ArithmeticError):
    pass


class DataError(QserError):
    pass


class CompatibilityError(QserError):
    pass
