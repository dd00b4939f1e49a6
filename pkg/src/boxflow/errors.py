"""Exception types raised across the package."""


class BoxflowError(Exception):
    """Base class for all errors raised by this package."""


class CatalogError(BoxflowError):
    """Unknown name requested from the built-in system catalog."""


class DomainError(BoxflowError):
    """A point lies outside the rectangular domain of a system or grid."""


class NumericalError(BoxflowError):
    """Integration produced non-finite values."""


class CapacityError(BoxflowError):
    """A requested structure exceeds hard size limits."""


class PreconditionError(BoxflowError):
    """An argument violates a documented precondition."""


class IsolationError(BoxflowError):
    """A box set fails the isolation test needed to build an index pair."""


class ConstructionError(BoxflowError):
    """An index pair construction finished but the result is invalid."""


class RegionOverlapError(BoxflowError):
    """The zero region and the one region of a profile function intersect."""


class FiltrationError(BoxflowError):
    """A filtration level fails validation.

    The offending level index is stored on the ``level`` attribute.
    """

    def __init__(self, message, level):
        super().__init__(message)
        self.level = level


class SelectionError(BoxflowError):
    """An index selects outside an enumerated collection."""


class IngestionError(BoxflowError):
    """An input file is malformed or missing required fields."""


class ConfigError(BoxflowError):
    """Command line arguments are inconsistent."""
