"""Exception types shared across the toolkit."""


class CableFsiError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(CableFsiError):
    """Invalid, missing or unknown configuration input."""


class GeometryError(CableFsiError):
    """Invalid mesh or surface geometry (degenerate cells, bad domains...)."""


class RefinementError(CableFsiError):
    """Bisection closure failed to terminate within the depth bound."""


class StepError(CableFsiError):
    """A time step could not be completed (divergence, Newton failure...).

    Carries ``residual`` when raised from an implicit solve.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class VacuumError(CableFsiError):
    """Half-Riemann wall recession beyond the vacuum limit."""
