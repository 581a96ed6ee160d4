"""Exception types shared across the package."""


class SecalignError(Exception):
    """Base class for all package errors."""


class InvalidStateError(SecalignError, ValueError):
    pass


class InvalidArgumentError(SecalignError, ValueError):
    pass


class DegenerateFrameError(SecalignError, ValueError):
    pass


class AccuracyError(SecalignError, ArithmeticError):
    """Quadrature refinements disagree by more than the requested tolerance."""


class RetryExhaustedError(SecalignError, RuntimeError):
    """Method B stayed inadmissible for every permitted retry round."""


class TranscriptError(SecalignError, ValueError):
    pass


class ParseError(SecalignError, ValueError):
    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)
        self.line = line
        self.column = column
