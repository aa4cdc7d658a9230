"""Exception hierarchy shared by every module."""


class BanditError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(BanditError, ValueError):
    pass


class InvalidDimensionError(InvalidInputError):
    pass


class InvalidRankError(InvalidInputError):
    pass


class SingularMatrixError(BanditError, ArithmeticError):
    pass


class DegenerateArmSetError(BanditError):
    """No nonsingular d-subset of arms could be found."""


class InternalConsistencyError(BanditError, AssertionError):
    pass


class ConfigError(BanditError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
