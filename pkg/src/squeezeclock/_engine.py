"""Stage-synchronous batch simulation of interrogation sequences.

All random numbers are drawn here with numpy before any kernel is called, so
both kernel backends consume identical draws and produce the same results.
One sequence, for every row ``b`` of the batch:

1. prepare ``|psi(kappa)>`` (full branch) or its moments (Gaussian branch);
2. advance the phase by ``phi0[b]``, i.e. rotate about ``J_x`` by ``-phi0[b]``;
3. for each weak stage ``i``: measure at ``omega[i]``, form the raw estimate
   ``y = -p / (omega[i] <J_z>)``, scale it by ``beta[i]`` and feed it back as
   a rotation that subtracts it from the phase;
4. measure ``J_3`` projectively, ``y = j3 / <J_z>`` (or its arcsin), scaled
   by ``beta[-1]``.

With ``calibrate=True`` each ``beta[i]`` is instead fitted on the batch at
stage ``i`` as the least-squares gain of ``y`` against the residual phase.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .spin import (
    EnsembleMoments,
    build_squeezed_state,
    exact_moments,
    gaussian_moments,
    ladder_coefficients,
    m_values,
)

#: above this atom number initial moments come from the continuum integrals
EXACT_MOMENT_LIMIT = 2_000_000
#: rows processed at once by the full branch (bounded memory)
FULL_CHUNK_ELEMENTS = 2**24


class CalibrationWarning(UserWarning):
    """Raised when a stage gain cannot be fitted."""


@lru_cache(maxsize=256)
def initial_moments(N: int, kappa: float) -> EnsembleMoments:
    if N <= EXACT_MOMENT_LIMIT:
        return exact_moments(build_squeezed_state(N, kappa))
    return gaussian_moments(N, kappa)


@dataclass
class BatchOutput:
    phi0: np.ndarray
    estimate: np.ndarray
    residual: np.ndarray
    betas: np.ndarray
    stage_ms: np.ndarray  # ensemble <dPhi_i^2> after each stage, i = 0..n
    outcomes: np.ndarray | None = None  # (B, n): weak p' values then j3
    stage_estimates: np.ndarray | None = None  # (B, n)


def draw_randoms(rng: np.random.Generator, B: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniforms for outcome sampling and normals for light noise, shape (B, n)."""
    u = rng.random((B, n))
    z = rng.standard_normal((B, n))
    return u, z


def final_reading(j3, mz0: float, arc: bool = False):
    """Unit-gain phase read from a projective ``J_3`` outcome."""
    r = np.asarray(j3, dtype=float) / mz0
    return np.arcsin(np.clip(r, -1.0, 1.0)) if arc else r


def fit_gain(residual: np.ndarray, y: np.ndarray, stage: int) -> float:
    """``argmin_b <(residual - b y)^2>``."""
    syy = float(np.dot(y, y))
    if not syy > 0 or not np.isfinite(syy):
        warnings.warn(
            f"stage {stage}: raw estimate has zero variance, gain set to 0",
            CalibrationWarning,
            stacklevel=3,
        )
        return 0.0
    return float(np.dot(residual, y)) / syy


def run_batch(
    N: int,
    kappa: float,
    omegas,
    betas,
    phi0,
    branch: str,
    rng: np.random.Generator,
    *,
    calibrate: bool = False,
    record: bool = False,
    moments: EnsembleMoments | None = None,
    randoms: tuple[np.ndarray, np.ndarray] | None = None,
    estimator: str = "linear",
) -> BatchOutput:
    if estimator not in ("linear", "arcsin"):
        raise ValueError(f"unknown estimator {estimator!r}")
    arc = estimator == "arcsin"
    omegas = np.asarray(omegas, dtype=float).reshape(-1)
    betas = np.array(betas, dtype=float).reshape(-1)
    n = len(omegas) + 1
    if len(betas) != n:
        raise ValueError(f"expected {n} gains for {n - 1} weak stages, got {len(betas)}")
    phi0 = np.ascontiguousarray(phi0, dtype=float).reshape(-1)
    B = len(phi0)
    u, z = randoms if randoms is not None else draw_randoms(rng, B, n)
    if u.shape != (B, n) or z.shape != (B, n):
        raise ValueError("random draws have the wrong shape")
    if branch == "gaussian":
        mom = moments if moments is not None else initial_moments(N, float(kappa))
        return _run_gaussian(mom, omegas, betas, phi0, u, z, calibrate, record, arc)
    if branch == "full":
        if moments is not None:
            raise ValueError("explicit moments only apply to the Gaussian branch")
        if calibrate or B * (N + 1) <= FULL_CHUNK_ELEMENTS:
            return _run_full(N, kappa, omegas, betas, phi0, u, z, calibrate, record, arc)
        step = max(FULL_CHUNK_ELEMENTS // (N + 1), 1)
        parts = [
            _run_full(N, kappa, omegas, betas, phi0[s : s + step], u[s : s + step],
                      z[s : s + step], False, record, arc)
            for s in range(0, B, step)
        ]
        return _concat(parts)
    raise ValueError(f"branch must be 'full' or 'gaussian', got {branch!r}")


def _concat(parts: list[BatchOutput]) -> BatchOutput:
    w = np.array([len(p.phi0) for p in parts], dtype=float)
    cat = lambda name: (  # noqa: E731
        None if getattr(parts[0], name) is None
        else np.concatenate([getattr(p, name) for p in parts])
    )
    return BatchOutput(
        phi0=cat("phi0"),
        estimate=cat("estimate"),
        residual=cat("residual"),
        betas=parts[0].betas,
        stage_ms=np.average([p.stage_ms for p in parts], axis=0, weights=w),
        outcomes=cat("outcomes"),
        stage_estimates=cat("stage_estimates"),
    )


class _Tracker:
    def __init__(self, phi0, n, calibrate, record, betas):
        B = len(phi0)
        self.phi0 = phi0
        self.total = np.zeros(B)
        self.calibrate = calibrate
        self.betas = betas
        self.stage_ms = np.empty(n + 1)
        self.stage_ms[0] = float(np.mean(phi0**2))
        self.outcomes = np.empty((B, n)) if record else None
        self.stage_est = np.empty((B, n)) if record else None

    def update(self, i, outcome, y):
        if self.calibrate:
            self.betas[i] = fit_gain(self.phi0 - self.total, y, i + 1)
        e = self.betas[i] * y
        self.total = self.total + e
        self.stage_ms[i + 1] = float(np.mean((self.phi0 - self.total) ** 2))
        if self.outcomes is not None:
            self.outcomes[:, i] = outcome
            self.stage_est[:, i] = e
        return e

    def output(self):
        return BatchOutput(
            phi0=self.phi0,
            estimate=self.total,
            residual=self.phi0 - self.total,
            betas=self.betas,
            stage_ms=self.stage_ms,
            outcomes=self.outcomes,
            stage_estimates=self.stage_est,
        )


def _run_gaussian(mom, omegas, betas, phi0, u, z, calibrate, record, arc=False):
    B, n = z.shape
    mz0 = mom.mean_z
    if not mz0 > 0:
        raise ValueError("prepared state must have <J_z> > 0")
    mu = np.tile(mom.mean, (B, 1))
    C = np.tile(mom.cov, (B, 1, 1))
    kernels.gauss_rotate_x(mu, C, -phi0)
    tr = _Tracker(phi0, n, calibrate, record, betas)
    for i, om in enumerate(omegas):
        p = kernels.gauss_weak(mu, C, float(om), np.ascontiguousarray(z[:, i]))
        e = tr.update(i, p, -p / (om * mz0))
        kernels.gauss_rotate_x(mu, C, e)
    j3 = kernels.gauss_project(mu, C, np.ascontiguousarray(z[:, n - 1]))
    tr.update(n - 1, j3, final_reading(j3, mz0, arc))
    return tr.output()


@lru_cache(maxsize=64)
def _prepared(N: int, kappa: float):
    st = build_squeezed_state(N, kappa)
    mz0 = exact_moments(st).mean_z
    return np.ascontiguousarray(st.amplitudes.real), mz0


def _run_full(N, kappa, omegas, betas, phi0, u, z, calibrate, record, arc=False):
    B, n = z.shape
    amp, mz0 = _prepared(int(N), float(kappa))
    if not mz0 > 0:
        raise ValueError("prepared state must have <J_z> > 0")
    m = m_values(N)
    a = ladder_coefficients(N)
    psi = np.tile(amp, (B, 1))
    kernels.full_rotate_x(psi, a, -phi0)
    tr = _Tracker(phi0, n, calibrate, record, betas)
    for i, om in enumerate(omegas):
        p = kernels.full_weak(psi, m, float(om), np.ascontiguousarray(u[:, i]),
                              np.ascontiguousarray(z[:, i]))
        e = tr.update(i, p, -p / (om * mz0))
        kernels.full_rotate_x(psi, a, np.ascontiguousarray(e))
    j3 = kernels.full_project(psi, m, np.ascontiguousarray(u[:, n - 1]))
    tr.update(n - 1, j3, final_reading(j3, mz0, arc))
    return tr.output()
