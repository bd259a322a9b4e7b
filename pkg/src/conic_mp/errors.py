"""Exception hierarchy shared by all modules."""


class ConicMPError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(ConicMPError, ValueError):
    pass


class ExactLmoUnavailable(ConicMPError):
    pass


class DegenerateQuery(ConicMPError):
    """The power iteration collapsed to the zero factor pair."""


class Infeasible(ConicMPError):
    """The point has no conic decomposition over the atoms."""


class SetTooLarge(ConicMPError):
    pass


class InvalidLabels(ConicMPError, ValueError):
    pass


class NonFiniteValue(ConicMPError, FloatingPointError):
    pass


class SingularCorrection(ConicMPError):
    pass


class EmptyDirection(ConicMPError):
    pass


class SubproblemFailure(ConicMPError):
    def __init__(self, message, iteration=None):
        super().__init__(message if iteration is None else f"iteration {iteration}: {message}")
        self.iteration = iteration


class MaxIterationsExceeded(ConicMPError):
    """Raised only when the caller asks for strict inner solves."""


class ZeroDirection(ConicMPError, ValueError):
    pass


class NotInHull(ConicMPError):
    pass


class NotTwoDimensional(ConicMPError, ValueError):
    pass


class DegenerateCone(ConicMPError):
    pass


class DegenerateSet(ConicMPError):
    pass


class MissingReferenceOptimum(ConicMPError):
    pass


class DatasetNotFound(ConicMPError, FileNotFoundError):
    pass
