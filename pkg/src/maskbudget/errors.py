"""Exception hierarchy shared across the package.

``ValidationError`` subclasses map to CLI exit code 2; plain I/O failures
(``OSError``) map to exit code 3.
"""


class MaskBudgetError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(MaskBudgetError):
    """Input data or arguments violate a documented invariant."""


class DimensionError(ValidationError):
    """A grid is empty or two masks do not share frame dimensions."""


class EmptyMaskError(ValidationError):
    """An operation that needs at least one set pixel got an empty mask."""


class InvalidPolygonError(ValidationError):
    """A polygon has fewer than three vertices."""


class SchemaError(ValidationError):
    """A dataset file violates the schema; message names frame/instance/field."""


class MissingPredictionsError(ValidationError):
    """A strategy needs model-predicted masks that the dataset does not carry."""


class GenerationError(MaskBudgetError):
    """Synthetic scene placement failed within the retry budget."""
