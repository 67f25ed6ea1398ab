"""Exception hierarchy shared by every estimator and loader."""


class TrsError(Exception):
    """Base class for all package errors."""


class NegativeCount(TrsError, ValueError):
    pass


class EmptyTable(TrsError, ValueError):
    pass


class ParseError(TrsError, ValueError):
    pass


class UnknownDataset(TrsError, KeyError):
    pass


class InvalidProbability(TrsError, ValueError):
    pass


class InvalidShape(TrsError, ValueError):
    pass


class NonPositiveArgument(TrsError, ValueError):
    pass


class SingularDesign(TrsError, ValueError):
    pass


class ZeroMargin(TrsError, ValueError):
    pass


class DomainError(TrsError, ValueError):
    pass


class NonConvergence(TrsError, RuntimeError):
    pass


class DegenerateObjective(TrsError, RuntimeError):
    pass


class GridTooCoarse(TrsError, ValueError):
    pass


class BoundaryEstimate(TrsError, ValueError):
    pass


class TooManyFailures(TrsError, RuntimeError):
    pass


class ZeroDenominator(TrsError, ZeroDivisionError):
    pass
