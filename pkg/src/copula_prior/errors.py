"""Exception hierarchy.  Each class carries the CLI exit code it maps to."""


class CopulaPriorError(Exception):
    exit_code = 1


class UsageError(CopulaPriorError, ValueError):
    exit_code = 2


class InvalidParameterError(UsageError):
    """A distribution or model parameter is out of its valid range."""


class DomainError(UsageError):
    """An argument lies outside the domain of a function (e.g. a probability not in (0, 1))."""


class DataError(CopulaPriorError, ValueError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class LabelDomainError(DataError):
    pass


class DegenerateFeatureError(DataError):
    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class FoldTooSmallError(DataError):
    pass


class NumericalError(CopulaPriorError, ArithmeticError):
    exit_code = 4


class LinAlgError(NumericalError):
    """Raised when a dependence matrix cannot be made positive definite."""


class DegenerateGridError(NumericalError):
    pass


class SolverDivergedError(NumericalError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []
