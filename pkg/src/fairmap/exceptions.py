"""Exception and warning classes raised across the package."""


class FairMapError(Exception):
    """Base class for all package errors."""


class SchemaError(FairMapError, ValueError):
    """Raised when a table does not agree with its declared schema.

    ``row`` and ``column`` point at the offending cell when known.
    """

    def __init__(self, message, row=None, column=None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column {column!r}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column


class MissingColumn(SchemaError):
    pass


class UnknownCategory(SchemaError):
    pass


class NonNumericValue(SchemaError):
    pass


class MissingValue(SchemaError):
    pass


class GroupTooSmall(FairMapError, ValueError):
    pass


class UnfittedEncoder(FairMapError, RuntimeError):
    pass


class BlockShapeMismatch(FairMapError, ValueError):
    pass


class EncoderMismatch(FairMapError, ValueError):
    pass


class ShapeMismatch(FairMapError, ValueError):
    pass


class NoCachedForward(FairMapError, RuntimeError):
    pass


class NonFiniteLoss(FairMapError, FloatingPointError):
    """Training produced a NaN or infinite loss.

    ``last_good`` holds the most recent ensemble snapshot whose losses were
    all finite (the freshly initialised ensemble if the first epoch fails).
    """

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class ModeConflict(FairMapError, ValueError):
    pass


class RowNotNormalized(FairMapError, ValueError):
    pass


class MissingGroup(FairMapError, ValueError):
    pass


class MultiGroupUnsupported(FairMapError, ValueError):
    pass


class NoNumericAttributes(FairMapError, ValueError):
    pass


class SchemaMismatch(FairMapError, ValueError):
    pass


class SingleClass(FairMapError, ValueError):
    pass


class MissingMetric(FairMapError, KeyError):
    pass


class ConfigError(FairMapError, ValueError):
    pass


class EmptyGroupWarning(UserWarning):
    """A sensitive-value combination declared in the schema has no rows."""


class ClampWarning(UserWarning):
    """Numeric values fell outside the fitted range and were clamped."""


class CategoricalPassThroughWarning(UserWarning):
    """Categorical attributes were left untouched by a numeric-only repair."""


class DegenerateGroupWarning(UserWarning):
    """A group has no positives or no negatives, so a rate is undefined."""


class NoConvergenceWarning(UserWarning):
    """An iterative solver stopped at its iteration cap."""
