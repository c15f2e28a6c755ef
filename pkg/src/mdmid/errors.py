"""Exception types raised by the identification pipeline."""


class MDMError(Exception):
    """Base class for all errors raised by :mod:`mdmid`."""

    module = "mdmid"


class ModelError(MDMError, ValueError):
    """An LTV model failed validation."""

    module = "model_core"


class HorizonError(MDMError, IndexError):
    """A requested window reaches outside the model horizon."""

    module = "stack_ops"


class RankDeficiencyError(MDMError, ArithmeticError):
    """A stacked observability matrix is not of full column rank.

    Attributes
    ----------
    k : int
        Window start (time index) where the failure occurred.
    rank, required : int
        Achieved and required rank.
    """

    module = "stack_ops"

    def __init__(self, k, rank, required):
        self.k = k
        self.rank = rank
        self.required = required
        super().__init__(
            f"observability stack at k={k} has rank {rank}, need {required}"
        )


class IdentifiabilityError(MDMError, ArithmeticError):
    """The regression design does not determine all covariance entries."""

    module = "estimators"


class WeightingError(MDMError, ArithmeticError):
    """The weighting matrix could not be factored even after regularization."""

    module = "estimators"
