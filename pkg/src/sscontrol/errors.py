"""Exception types shared across the package."""


class SSControlError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(SSControlError, ValueError):
    pass


class NumericalBreakdown(SSControlError, ArithmeticError):
    pass


class Inconsistent(SSControlError, ValueError):
    """A linear system that should be consistent has a residual above tolerance."""


class HamiltonianInfinite(SSControlError):
    def __init__(self, message, ray=None):
        super().__init__(message)
        self.ray = ray


class NotControllable(SSControlError):
    pass


class EmptyCone(SSControlError, ValueError):
    pass


class DimensionTooLarge(SSControlError, ValueError):
    pass


class DegenerateWorkload(SSControlError):
    pass


class DimensionUnsupported(SSControlError, ValueError):
    pass


class OutsideWorkloadSpace(SSControlError, ValueError):
    pass


class CrossTermDominanceViolated(SSControlError, ValueError):
    pass


class EmptyInterior(SSControlError, ValueError):
    pass


class NoAdmissibleDirection(SSControlError):
    pass


class NotConverged(SSControlError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class StateEscaped(SSControlError):
    pass


class InadmissiblePolicy(SSControlError, ValueError):
    pass


class MixedGrids(SSControlError, ValueError):
    pass


class ScenarioError(SSControlError, ValueError):
    """Scenario JSON failed validation; message carries the offending field path."""
