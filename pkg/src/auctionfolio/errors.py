"""Exception hierarchy.

Validation problems (bad inputs, out-of-domain arguments) derive from
``ValueError``; numerical failures of an otherwise valid computation derive
from ``ArithmeticError``. The CLI maps the two families to distinct exit codes.
"""


class AuctionfolioError(Exception):
    """Base class for all package errors."""


class ValidationError(AuctionfolioError, ValueError):
    pass


class DomainError(ValidationError):
    pass


class InsufficientDataError(ValidationError):
    pass


class TrimError(ValidationError):
    """Evaluation point lies outside the trimmed interval."""


class ShapeError(ValidationError):
    """Band shape function touches zero on the evaluation grid."""


class ConfigError(ValidationError):
    pass


class EmptySubsampleError(ValidationError):
    pass


class SchemaError(ValidationError):
    """CSV input does not match the expected schema.

    ``row_errors`` holds ``(line_number, message)`` pairs.
    """

    def __init__(self, message, row_errors=()):
        super().__init__(message)
        self.row_errors = list(row_errors)


class NumericalError(AuctionfolioError, ArithmeticError):
    pass


class DegenerateSampleError(NumericalError):
    pass


class SingularityError(NumericalError):
    pass


class InfiniteEstimateError(NumericalError):
    pass


class CollinearityError(NumericalError):
    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = list(columns)
