"""Exception hierarchy.

Every error carries a short ``kind`` string; the CLI uses it for the
machine-readable error document written on failure.
"""


class PipecondError(Exception):
    kind = "error"


class DomainError(PipecondError, ValueError):
    kind = "domain"


class DimensionMismatch(PipecondError, ValueError):
    kind = "dimension"


class LengthMismatch(DimensionMismatch):
    pass


class RankDeficient(PipecondError, ArithmeticError):
    kind = "numeric"


class NonConvergence(PipecondError, ArithmeticError):
    kind = "numeric"


class NonFiniteLoss(PipecondError, ArithmeticError):
    kind = "numeric"


class ZeroVariance(PipecondError, ArithmeticError):
    kind = "numeric"


class SingularCovariance(PipecondError, ArithmeticError):
    kind = "numeric"


class DataError(PipecondError, ValueError):
    kind = "data"


class MissingColumn(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyFile(DataError):
    pass


class ColumnNotNumeric(DataError):
    pass


class ConstantColumn(DataError):
    def __init__(self, column):
        super().__init__(f"column {column!r} is constant on the training set")
        self.column = column


class DegenerateInput(DataError):
    pass


class DegenerateSplit(DataError):
    pass


class TooFewRows(DataError):
    pass


class InvalidK(DataError):
    pass


class InvalidRange(DataError):
    pass


class UnknownFeature(DataError):
    pass


class StaleCache(PipecondError, RuntimeError):
    kind = "state"


class IncompleteRun(PipecondError):
    kind = "incomplete"

    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("run directory is missing: " + ", ".join(self.missing))


class ConfigError(PipecondError, ValueError):
    kind = "config"
