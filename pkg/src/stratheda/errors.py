class StrathedaError(Exception):
    """Base class for all errors raised by this package."""


class FrameError(StrathedaError):
    pass


class ColumnError(FrameError):
    def __init__(self, column, path=None):
        self.column = column
        where = f" in {path}" if path else ""
        super().__init__(f"missing column {column!r}{where}")


class ParseError(FrameError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class EmptyInputError(FrameError):
    pass


class ValidationError(StrathedaError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row!r}: {message}"
        super().__init__(message)


class ModeError(StrathedaError):
    pass


class DimensionError(StrathedaError):
    pass


class InfeasibleError(StrathedaError):
    def __init__(self, targets, cvs=None):
        self.targets = list(targets)
        self.cvs = cvs
        super().__init__(f"precision constraints unsatisfiable for targets {self.targets}")


class GuardError(StrathedaError):
    pass
