"""
Domain exceptions raised by the simulation services.
"""


class KineticsError(Exception):
    """Base class for every error raised by the simulation code."""


class ConfigError(KineticsError):
    """A run configuration or argument is invalid."""


class InvalidKernel(KineticsError):
    """The angular kernel is degenerate (kappa not finite and positive) or malformed."""


class CapExceeded(KineticsError):
    """A recursive sampler hit its hard cap on internal nodes."""

    def __init__(self, cap: int, t: float):
        super().__init__(f"collision counter reached the cap {cap} at t={t}")
        self.cap = cap
        self.t = t


class EmptyCloud(KineticsError):
    """An operator received a particle cloud with no particles."""


class StabilityViolation(KineticsError):
    """The DSMC step size breaks dt * kappa * majorant <= 0.5."""


class InsufficientData(KineticsError):
    """Too few records for the requested estimator."""


class UnrepresentableWeight(KineticsError):
    """A sampled weight exceeds the largest finite float."""

    def __init__(self, log_m: float):
        super().__init__(f"weight exp({log_m:.6g}) overflows a float")
        self.log_m = log_m
