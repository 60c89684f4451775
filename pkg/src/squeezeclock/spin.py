"""Collective spin states of the squeezed family and their moments.

States are stored as amplitude vectors over the eigenbasis of ``J_y`` with
``m = -J..J`` (``J = N/2``), index ``j = m + J``. The transverse operators act
through ladder operators quantised along ``y``::

    <m+1| J_z |m> = -a_m / 2,    <m+1| J_x |m> = +i a_m / 2,
    a_m = sqrt(J(J+1) - m(m+1))

This is the Condon-Shortley convention for the cyclic triple (z, x, y)
conjugated by a pi rotation about ``y``; with it the family
``(-1)^m exp(-(m/kappa)^2)`` has its mean spin along ``+z``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import integrate

from . import kernels

Axis = Literal["axis1", "axis3"]


class SpinDomainError(ValueError):
    """Invalid atom number or squeezing parameter."""


@dataclass(frozen=True)
class SpinStateVector:
    """Amplitudes ``c_m`` over ``J_y`` eigenstates, ``m = -N/2 .. N/2``."""

    atom_count: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.atom_count + 1,):
            raise SpinDomainError(
                f"expected {self.atom_count + 1} amplitudes, got shape {amps.shape}"
            )
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def J(self) -> float:
        return self.atom_count / 2

    @property
    def m(self) -> np.ndarray:
        return m_values(self.atom_count)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.sum(self.probabilities))

    def is_real(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.amplitudes.imag) <= tol))


@dataclass(frozen=True)
class EnsembleMoments:
    """First and second moments of ``(J_x, J_y, J_z)``.

    Covariances are symmetrised, ``cov_ab = <{A, B}>/2 - <A><B>``.
    """

    mean_x: float
    mean_y: float
    mean_z: float
    var_x: float
    var_y: float
    var_z: float
    cov_yz: float = 0.0
    cov_xz: float = 0.0
    cov_xy: float = 0.0

    @property
    def mean(self) -> np.ndarray:
        return np.array([self.mean_x, self.mean_y, self.mean_z])

    @property
    def cov(self) -> np.ndarray:
        return np.array(
            [
                [self.var_x, self.cov_xy, self.cov_xz],
                [self.cov_xy, self.var_y, self.cov_yz],
                [self.cov_xz, self.cov_yz, self.var_z],
            ]
        )

    @classmethod
    def from_arrays(cls, mean, cov) -> "EnsembleMoments":
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        return cls(
            mean_x=float(mean[0]),
            mean_y=float(mean[1]),
            mean_z=float(mean[2]),
            var_x=float(cov[0, 0]),
            var_y=float(cov[1, 1]),
            var_z=float(cov[2, 2]),
            cov_yz=float(0.5 * (cov[1, 2] + cov[2, 1])),
            cov_xz=float(0.5 * (cov[0, 2] + cov[2, 0])),
            cov_xy=float(0.5 * (cov[0, 1] + cov[1, 0])),
        )

    def second_moment(self, axis: str) -> float:
        i = "xyz".index(axis)
        return float(self.cov[i, i] + self.mean[i] ** 2)


def m_values(N: int) -> np.ndarray:
    J = N / 2
    return np.arange(-J, J + 1.0)


def ladder_coefficients(N: int) -> np.ndarray:
    """``a_m = sqrt(J(J+1) - m(m+1))`` for ``m = -J .. J-1``."""
    J = N / 2
    m = m_values(N)[:-1]
    return np.sqrt(np.maximum(J * (J + 1) - m * (m + 1), 0.0))


def _check_N(N: int) -> int:
    if int(N) != N or N < 2 or int(N) % 2:
        raise SpinDomainError(f"atom number must be an even integer >= 2, got {N}")
    return int(N)


def build_squeezed_state(N: int, kappa: float) -> SpinStateVector:
    """``|psi(kappa)> ~ sum_m (-1)^m exp(-(m/kappa)^2) |m>``, normalised."""
    N = _check_N(N)
    if not kappa > 0 or not np.isfinite(kappa):
        raise SpinDomainError(f"kappa must be positive, got {kappa}")
    m = m_values(N)
    log_amp = -((m / kappa) ** 2)
    amps = np.exp(log_amp - log_amp.max())
    amps[np.abs(m) % 2 == 1] *= -1.0
    amps /= np.linalg.norm(amps)
    return SpinStateVector(N, amps)


def apply_jz(c: np.ndarray, a: np.ndarray) -> np.ndarray:
    out = np.zeros_like(c)
    out[1:] -= 0.5 * a * c[:-1]
    out[:-1] -= 0.5 * a * c[1:]
    return out


def apply_jx(c: np.ndarray, a: np.ndarray) -> np.ndarray:
    out = np.zeros(c.shape, dtype=complex)
    out[1:] += 0.5j * a * c[:-1]
    out[:-1] -= 0.5j * a * c[1:]
    return out


def operator_matrices(N: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense ``(J_x, J_y, J_z)`` in the storage basis. Meant for small N."""
    a = ladder_coefficients(N)
    jz = np.diag(-0.5 * a, -1) + np.diag(-0.5 * a, 1)
    jx = np.diag(0.5j * a, -1) + np.diag(-0.5j * a, 1)
    jy = np.diag(m_values(N)).astype(complex)
    return jx, jy, jz.astype(complex)


def exact_moments(state: SpinStateVector) -> EnsembleMoments:
    """All first and second moments by direct summation over ``m``."""
    c = state.amplitudes
    m = state.m
    a = ladder_coefficients(state.atom_count)
    vy = m * c
    vz = apply_jz(c, a)
    vx = apply_jx(c, a)

    def braket(u, v):
        return np.vdot(u, v)

    mx = braket(c, vx).real
    my = braket(c, vy).real
    mz = braket(c, vz).real
    var_y = float(np.sum(state.probabilities * (m - my) ** 2))
    var_z = float(np.sum(np.abs(vz - mz * c) ** 2))
    var_x = float(np.sum(np.abs(vx - mx * c) ** 2))
    return EnsembleMoments(
        mean_x=float(mx),
        mean_y=float(my),
        mean_z=float(mz),
        var_x=var_x,
        var_y=var_y,
        var_z=var_z,
        cov_yz=float(braket(vy, vz).real - my * mz),
        cov_xz=float(braket(vx, vz).real - mx * mz),
        cov_xy=float(braket(vx, vy).real - mx * my),
    )


def gaussian_moments(N: int, kappa: float) -> EnsembleMoments:
    """Moments of ``|psi(kappa)>`` with sums over ``m`` replaced by integrals.

    Valid for large ensembles; ``N >= 100`` and ``kappa >= 1`` are enforced.
    Variances are integrated as sums of squares of residual amplitudes so that
    nearly coherent states (``var_z`` tiny against ``<J_z>^2``) keep their
    relative precision.
    """
    if N < 100:
        raise SpinDomainError(f"continuum approximation needs N >= 100, got {N}")
    N = _check_N(N)
    if not kappa >= 1:
        raise SpinDomainError(f"continuum approximation needs kappa >= 1, got {kappa}")
    J = N / 2
    jj = J * (J + 1)
    lim = min(J - 1.0, 14.0 * kappa)

    def g(m):
        return np.exp(-((m / kappa) ** 2))

    def a(m):
        return np.sqrt(np.maximum(jj - m * (m + 1), 0.0))

    def quad(f):
        val, _ = integrate.quad(
            f, -lim, lim, epsabs=1e-12, epsrel=1e-12, limit=400, points=[0.0]
        )
        return val

    norm = quad(lambda m: g(m) ** 2)
    var_y = quad(lambda m: m**2 * g(m) ** 2) / norm

    # (J_z c)_m = (-1)^m h(m) and (J_x c)_m = i (-1)^m k(m) for c_m = (-1)^m g(m)
    def h(m):
        return 0.5 * (a(m - 1) * g(m - 1) + a(m) * g(m + 1))

    def k(m):
        return 0.5 * (a(m) * g(m + 1) - a(m - 1) * g(m - 1))

    mean_z = quad(lambda m: g(m) * h(m)) / norm
    var_z = quad(lambda m: (h(m) - mean_z * g(m)) ** 2) / norm
    var_x = quad(lambda m: k(m) ** 2) / norm
    return EnsembleMoments(
        mean_x=0.0, mean_y=0.0, mean_z=mean_z, var_x=var_x, var_y=var_y, var_z=var_z
    )


def rotation_matrix(axis: Axis, angle: float) -> np.ndarray:
    """SO(3) matrix acting on ``(<J_x>, <J_y>, <J_z>)`` for ``rotate_state``."""
    c, s = np.cos(angle), np.sin(angle)
    if axis == "axis1":
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    if axis == "axis3":
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    raise ValueError(f"unknown axis {axis!r}")


def rotate_state(state: SpinStateVector, axis: Axis, angle: float) -> SpinStateVector:
    """Apply ``exp(-i angle J_axis)``; ``axis1`` is ``J_x``, ``axis3`` is ``J_y``."""
    if not np.isfinite(angle):
        raise ValueError("rotation angle must be finite")
    c = state.amplitudes
    if axis == "axis3":
        return SpinStateVector(state.atom_count, c * np.exp(-1j * angle * state.m))
    if axis != "axis1":
        raise ValueError(f"unknown axis {axis!r}")
    if angle == 0.0:
        return state
    a = ladder_coefficients(state.atom_count)
    parts = np.ascontiguousarray(np.stack([c.real, c.imag]))
    kernels.full_rotate_x(parts, a, np.full(2, float(angle)))
    return SpinStateVector(state.atom_count, parts[0] + 1j * parts[1])
