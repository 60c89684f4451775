"""Hot kernels with a numba and a pure-numpy implementation.

The backend is read from ``SQUEEZECLOCK_BACKEND`` at import time. Use
:func:`get_kernels` to pick one explicitly (tests and the benchmark do).

All kernels operate in place on batched float arrays:

``full_rotate_x(psi, a, theta)``
    ``psi[b] <- exp(-i theta[b] J_x) psi[b]`` for real rows of shape ``(B, N+1)``.
``full_weak(psi, m, omega, u, z) -> p``
    Homodyne outcome and Kraus update; ``u`` uniform, ``z`` standard normal.
``full_project(psi, m, u) -> m``
    Projective ``J_y`` outcome.
``gauss_rotate_x(mu, C, theta)``, ``gauss_weak(mu, C, omega, z)``, ``gauss_project(mu, C, z)``
    Moment-filter counterparts on ``mu (B, 3)`` and ``C (B, 3, 3)``.
``gauss_clock_loop(...)``
    Sequential closed loop over clock cycles.
"""

from __future__ import annotations

from types import ModuleType

from .._backend import selected_backend

_NAMES = (
    "chebyshev_order",
    "bessel_j_sequence",
    "full_rotate_x",
    "full_weak",
    "full_project",
    "gauss_rotate_x",
    "gauss_weak",
    "gauss_project",
    "gauss_clock_loop",
)


def get_kernels(name: str | None = None) -> ModuleType:
    name = name or selected_backend()
    if name == "numba":
        from . import _numba

        return _numba
    if name == "numpy":
        from . import _numpy

        return _numpy
    raise ValueError(f"unknown backend {name!r}")


BACKEND = selected_backend()
_impl = get_kernels(BACKEND)

chebyshev_order = _impl.chebyshev_order
bessel_j_sequence = _impl.bessel_j_sequence
full_rotate_x = _impl.full_rotate_x
full_weak = _impl.full_weak
full_project = _impl.full_project
gauss_rotate_x = _impl.gauss_rotate_x
gauss_weak = _impl.gauss_weak
gauss_project = _impl.gauss_project
gauss_clock_loop = _impl.gauss_clock_loop

__all__ = ["BACKEND", "get_kernels", *_NAMES]
