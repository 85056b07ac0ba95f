"""Spectral evolution-PDE solver with time-dependent renormalization.

Solves u_t = L u + N(u) through the equivalent Duhamel integral equation,
iterated as a space-time fixed point in which every iterate is rescaled by
time-dependent factors so that chosen conservation laws or dissipation-rate
equations hold exactly at all time levels.
"""

from .errors import (
    ConfigError,
    ContourError,
    DimensionError,
    DivergenceError,
    InstabilityError,
    NewtonError,
    PositivityError,
    QuadratureError,
    RootSelectionError,
    SplitError,
    StiffnessError,
    TdsrError,
)
from .grids import ChebyshevGrid, PeriodicGrid

__version__ = "0.1.0"

__all__ = [
    "PeriodicGrid",
    "ChebyshevGrid",
    "TdsrError",
    "DimensionError",
    "StiffnessError",
    "ContourError",
    "QuadratureError",
    "RootSelectionError",
    "NewtonError",
    "PositivityError",
    "SplitError",
    "DivergenceError",
    "InstabilityError",
    "ConfigError",
    "__version__",
]
