"""Exception hierarchy.

Every error raised by the library derives from :class:`TrendLearnerError`.
Most also derive from ``ValueError`` so callers that only care about bad
input can catch the builtin.
"""


class TrendLearnerError(Exception):
    pass


class InvalidInputError(TrendLearnerError, ValueError):
    pass


class InvalidShiftError(InvalidInputError):
    pass


class DegenerateSeriesError(InvalidInputError):
    """An all-zero series where a non-zero norm is required."""


class EmptyClusterError(InvalidInputError):
    pass


class InvalidKError(InvalidInputError):
    pass


class DivisionDegenerateError(TrendLearnerError, ArithmeticError):
    """A ratio whose denominator vanished (e.g. zero intercluster CV)."""


class NoElbowError(TrendLearnerError):
    """No stable region was found in the beta_CV curve."""

    def __init__(self, message, curve):
        super().__init__(message)
        self.curve = dict(curve)


class InvalidPeriodError(InvalidInputError):
    pass


class InvalidScoreError(InvalidInputError):
    pass


class InsufficientDataError(InvalidInputError):
    pass


class ConfigurationError(InvalidInputError):
    pass


class InvalidTrainingSetError(InvalidInputError):
    pass


class UndefinedRIError(InvalidInputError):
    pass


class UndefinedCorrelationError(TrendLearnerError, ArithmeticError):
    pass


class InvalidTargetError(InvalidInputError):
    pass


class RankDeficiencyError(TrendLearnerError, ArithmeticError):
    pass


class ValidationError(InvalidInputError):
    def __init__(self, message, object_ids=()):
        super().__init__(message)
        self.object_ids = list(object_ids)


class DatasetParseError(InvalidInputError):
    def __init__(self, message, line=None, field=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field {field!r}")
        super().__init__(f"{', '.join(loc)}: {message}" if loc else message)
        self.line = line
        self.field = field
