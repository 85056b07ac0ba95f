"""Exception types raised by the solver stack."""


class TdsrError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(TdsrError):
    """Field shape does not match the grid it is used with."""


class StiffnessError(TdsrError):
    """Matrix exponential input exceeds the configured spectral-radius cap."""


class ContourError(TdsrError):
    """Integration contour fails to enclose the operator spectrum."""


class QuadratureError(TdsrError):
    """Time-quadrature preconditions violated (e.g. too few time levels)."""


class RootSelectionError(TdsrError):
    """No admissible root for a renormalization-factor equation."""


class NewtonError(TdsrError):
    """Newton iteration for the renormalization factors failed."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = residual_history


class PositivityError(TdsrError):
    """A quantity required to stay positive became non-positive."""


class SplitError(TdsrError):
    """Pseudo initial conditions are inconsistent or degenerate."""


class DivergenceError(TdsrError):
    """Fixed-point iteration diverged.

    Carries whatever partial results were available when divergence was
    detected, so callers can persist them.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InstabilityError(TdsrError):
    """Reference integrator blew up (solution magnitude above threshold)."""


class ConfigError(TdsrError):
    """Invalid run configuration."""
