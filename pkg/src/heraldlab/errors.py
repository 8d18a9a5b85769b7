"""Exception and warning types raised across heraldlab."""


class HeraldLabError(Exception):
    """Base class for all heraldlab errors."""


class DomainError(HeraldLabError, ValueError):
    pass


class CutoffTooSmall(HeraldLabError):
    pass


class NotEntangled(HeraldLabError):
    pass


class NoSolution(HeraldLabError):
    pass


class SingularTable(HeraldLabError):
    pass


class EmptyModulation(HeraldLabError):
    pass


class UnreachableWaveform(HeraldLabError):
    pass


class RangeExceeded(HeraldLabError):
    """AWG voltage outside the allowed window.

    ``scale`` is the factor by which the modulation function must be multiplied
    so that the largest voltage sits exactly on the limit.
    """

    def __init__(self, message: str, scale: float):
        super().__init__(message)
        self.scale = scale


class GridMismatch(HeraldLabError):
    pass


class InsufficientFrames(HeraldLabError):
    pass


class ConfigError(HeraldLabError):
    pass


class AssumptionViolated(UserWarning):
    pass


class IllConditioned(UserWarning):
    pass


class NonConvergence(UserWarning):
    pass
