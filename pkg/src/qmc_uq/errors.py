"""Exception hierarchy.

``PreconditionError`` and its subclasses mark inputs that are well formed
but violate a method's stated hypothesis (undeclared convexity, too few
replicates, ...).  The CLI maps them to exit status 3.
"""


class QmcUqError(Exception):
    """Base class for all package errors."""


class PreconditionError(QmcUqError, ValueError):
    """A method was asked to run outside its hypotheses."""


class AssumptionError(PreconditionError):
    """An integrand lacks a structural property the method needs."""


class InsufficientReplicatesError(PreconditionError):
    """Too few replicates for the requested statistic."""


class AttainabilityError(PreconditionError):
    """The requested confidence level cannot be reached.

    ``attainable`` holds the smallest two-sided error level that can be
    reached with the data at hand.
    """

    def __init__(self, message: str, attainable: float):
        super().__init__(message)
        self.attainable = attainable


class VerificationError(PreconditionError):
    """A point set failed an NNLD/NPLD check; ``corner`` is the witness."""

    def __init__(self, message: str, corner=None):
        super().__init__(message)
        self.corner = corner


class BudgetExceededError(QmcUqError):
    """An exact enumeration would exceed its work budget."""

    def __init__(self, message: str, required: int):
        super().__init__(message)
        self.required = required


class DirectionTableError(QmcUqError, ValueError):
    """The direction-number table does not cover the request."""

    def __init__(self, message: str, dimension: int):
        super().__init__(message)
        self.dimension = dimension
