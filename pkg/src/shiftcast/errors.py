"""Exception types raised across the package."""


class ShiftcastError(Exception):
    """Base class for every error raised by shiftcast."""


class ConfigError(ShiftcastError, ValueError):
    pass


class SchemaError(ShiftcastError, ValueError):
    """A CSV or model file does not match its schema.

    ``line`` is the 1-based physical line number when known.
    """

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class MissingDeposit(ShiftcastError):
    pass


class DuplicatePad(ShiftcastError):
    pass


class NonPositiveDimension(ShiftcastError, ValueError):
    pass


class NonFiniteInput(ShiftcastError, ValueError):
    pass


class UnknownSpec(ShiftcastError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class MixedSpec(ShiftcastError, ValueError):
    pass


class DimensionMismatch(ShiftcastError, ValueError):
    pass


class EmptyTrainingSet(ShiftcastError, ValueError):
    pass


class InfeasiblePoint(ShiftcastError, ValueError):
    pass


class TooLarge(ShiftcastError, ValueError):
    pass


class KTooLarge(ShiftcastError, ValueError):
    pass


class KTooSmall(ShiftcastError, ValueError):
    pass


class LengthMismatch(ShiftcastError, ValueError):
    pass


class EmptyInput(ShiftcastError, ValueError):
    pass
