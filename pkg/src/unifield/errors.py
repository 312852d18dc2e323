"""Exception hierarchy shared by all modules."""


class UnifieldError(Exception):
    """Base class for errors raised by this package."""


class UnknownCoordinateError(UnifieldError, KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"unknown coordinate {self.name!r}"


class MissingCoordinateError(UnifieldError, KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"no value supplied for coordinate {self.name!r}"


class SingularityError(UnifieldError, ArithmeticError):
    """An analytic singularity was hit during evaluation."""

    def __init__(self, subexpr: str, reason: str):
        super().__init__(f"{reason} in {subexpr}")
        self.subexpr = subexpr
        self.reason = reason


class ParseError(UnifieldError, ValueError):
    def __init__(self, message: str, line: int, column: int, token: str | None = None):
        self.message = message
        self.line = line
        self.column = column
        self.token = token
        super().__init__(f"line {line}, column {column}: {message}")


class DegreeError(UnifieldError, ValueError):
    pass


class SingularLagrangianError(UnifieldError):
    pass


class ConvergenceError(UnifieldError, RuntimeError):
    pass


class InconsistentSystemError(UnifieldError, ValueError):
    pass


class HDWRelationError(UnifieldError, AssertionError):
    pass


class ConfigError(UnifieldError, ValueError):
    pass
