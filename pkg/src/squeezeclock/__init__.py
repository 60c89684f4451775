"""Simulation and analytics for atomic clocks driven by spin-squeezed ensembles
with adaptive weak measurements."""

from ._backend import BACKEND_ENV, selected_backend
from .spin import (
    EnsembleMoments,
    SpinDomainError,
    SpinStateVector,
    build_squeezed_state,
    exact_moments,
    gaussian_moments,
    rotate_state,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND_ENV",
    "EnsembleMoments",
    "SpinDomainError",
    "SpinStateVector",
    "build_squeezed_state",
    "exact_moments",
    "gaussian_moments",
    "rotate_state",
    "selected_backend",
]
