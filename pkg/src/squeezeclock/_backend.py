"""Kernel backend selection.

The hot loops live in :mod:`squeezeclock.kernels`. They exist twice: a numba
``@njit`` version and a vectorised pure-numpy version. Set the environment
variable ``SQUEEZECLOCK_BACKEND=numpy`` to force the numpy path; by default
numba is used whenever it imports.
"""

from __future__ import annotations

import os

BACKEND_ENV = "SQUEEZECLOCK_BACKEND"
BACKENDS = ("numba", "numpy")


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def selected_backend() -> str:
    choice = os.environ.get(BACKEND_ENV, "numba").strip().lower() or "numba"
    if choice not in BACKENDS:
        raise ValueError(f"{BACKEND_ENV} must be one of {BACKENDS}, got {choice!r}")
    if choice == "numba" and not numba_available():
        return "numpy"
    return choice
