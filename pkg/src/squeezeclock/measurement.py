"""Weak QND measurement, final projective measurement and phase estimators.

The probe couples to the meter axis ``J_3``, which at zero phase is ``J_y``.
The homodyne outcome is ``p' = P - Omega J_3`` with vacuum light,
``<P^2> = <X^2> = 1/2``. The likelihood of ``p'`` given ``J_y = m`` is therefore
normal with mean ``-Omega m`` and variance ``1/2``.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._engine import CalibrationWarning, fit_gain  # noqa: F401  (re-exported)
from ._io import write_csv
from .spin import EnsembleMoments, SpinStateVector

LIGHT_VARIANCE = 0.5


@dataclass(frozen=True)
class WeakMeasurementRecord:
    strength: float
    outcome: float
    stage: int = 1

    def __post_init__(self):
        if not self.strength >= 0:
            raise ValueError(f"measurement strength must be >= 0, got {self.strength}")
        if not np.isfinite(self.outcome):
            raise ValueError("measurement outcome must be finite")


@dataclass(frozen=True)
class PhaseEstimate:
    value: float
    gain: float

    def __post_init__(self):
        if not (np.isfinite(self.value) and np.isfinite(self.gain)):
            raise ValueError("phase estimate and gain must be finite")


def outcome_density(p, probabilities, m, omega: float) -> np.ndarray:
    """Mixture density ``sum_m P(m) N(p; -omega m, 1/2)``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    d = p[:, None] + omega * np.asarray(m)[None, :]
    comp = np.exp(-(d**2) / (2 * LIGHT_VARIANCE)) / np.sqrt(2 * np.pi * LIGHT_VARIANCE)
    return comp @ np.asarray(probabilities)


def weak_measure_full(
    state: SpinStateVector, omega: float, rng: np.random.Generator, stage: int = 1
) -> tuple[WeakMeasurementRecord, SpinStateVector]:
    """Sample ``p'`` from the exact mixture and apply the Gaussian Kraus factor."""
    if not omega >= 0:
        raise ValueError(f"measurement strength must be >= 0, got {omega}")
    probs = state.probabilities
    m = state.m
    cdf = np.cumsum(probs)
    j = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(m) - 1)
    p = -omega * m[j] + np.sqrt(LIGHT_VARIANCE) * rng.standard_normal()
    record = WeakMeasurementRecord(float(omega), float(p), stage)
    if omega == 0:
        return record, state
    log_w = -((p + omega * m) ** 2) / (4 * LIGHT_VARIANCE)
    log_w = np.where(probs > 0, log_w, -np.inf)
    amps = state.amplitudes * np.exp(log_w - log_w.max())
    amps /= np.linalg.norm(amps)
    return record, SpinStateVector(state.atom_count, amps)


def weak_measure_gaussian(
    moments: EnsembleMoments, omega: float, rng: np.random.Generator, stage: int = 1
) -> tuple[WeakMeasurementRecord, EnsembleMoments]:
    """Conditional-Gaussian update of the moments plus averaged back-action.

    The outcome is drawn from ``N(-omega mean_y, omega**2 var_y + 1/2)``. The
    meter reading conditions ``mean`` and ``cov`` linearly; the back-action is a
    rotation of ``(J_z, J_x)`` about the meter axis by ``Pi ~ N(0, omega**2/2)``,
    averaged exactly over ``Pi``.
    """
    if not omega >= 0:
        raise ValueError(f"measurement strength must be >= 0, got {omega}")
    mu = moments.mean[None, :].copy()
    C = moments.cov[None, :, :].copy()
    p = kernels.gauss_weak(mu, C, float(omega), np.array([rng.standard_normal()]))[0]
    return WeakMeasurementRecord(float(omega), float(p), stage), EnsembleMoments.from_arrays(
        mu[0], C[0]
    )


def projective_measure(state: SpinStateVector | EnsembleMoments, rng: np.random.Generator) -> float:
    """Outcome of a projective ``J_3`` measurement."""
    if isinstance(state, EnsembleMoments):
        return float(state.mean_y + np.sqrt(max(state.var_y, 0.0)) * rng.standard_normal())
    cdf = np.cumsum(state.probabilities)
    j = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(cdf) - 1)
    return float(state.m[j])


def estimate_phase(
    measurement: WeakMeasurementRecord | float, beta: float, mean_jz: float
) -> PhaseEstimate:
    """``-beta p'/(Omega <J_z>)`` for weak stages, ``beta j3/<J_z>`` for the final one."""
    if not mean_jz > 0:
        raise ValueError(f"<J_z> of the prepared state must be positive, got {mean_jz}")
    if isinstance(measurement, WeakMeasurementRecord):
        if measurement.strength == 0:
            raise ValueError("cannot estimate a phase from a weak stage with zero strength")
        value = -beta * measurement.outcome / (measurement.strength * mean_jz)
    else:
        value = beta * float(measurement) / mean_jz
    return PhaseEstimate(float(value), float(beta))


def calibrate_betas(
    N: int,
    schedule,
    pilot_runs: int = 10_000,
    rng: np.random.Generator | None = None,
    *,
    branch: str = "gaussian",
    gammaT: float | None = None,
    phases: np.ndarray | None = None,
) -> np.ndarray:
    """Stage-by-stage least-squares gains from one pilot batch.

    Each ``beta_i`` minimises ``<(dPhi_{i-1} - beta_i y_i)^2>`` over the pilot
    ensemble with earlier gains already fixed; ``y_i`` is the unit-gain stage
    estimate. Pilot phases are ``phases`` if given, otherwise i.i.d.
    ``N(0, gammaT)``.
    """
    from .protocol import simulate_sequences

    if pilot_runs < 1000:
        raise ValueError(f"calibration needs at least 1000 pilot runs, got {pilot_runs}")
    if rng is None:
        raise ValueError("an explicit random generator is required")
    if phases is None:
        if gammaT is None:
            raise ValueError("give either pilot phases or gammaT")
        phases = np.sqrt(gammaT) * rng.standard_normal(pilot_runs)
    else:
        phases = np.asarray(phases, dtype=float)[:pilot_runs]
    out = simulate_sequences(N, schedule, phases, branch, rng, calibrate=True)
    return out.betas


def write_schedule_csv(path, schedule, meta=None) -> None:
    """Columns ``stage, omega, beta``; the projective stage has ``omega = inf``."""
    om = list(schedule.omegas) + [float("inf")]
    write_csv(
        path,
        ["stage", "omega", "beta"],
        zip(range(1, schedule.n + 1), om, schedule.betas),
        meta={"kappa": schedule.kappa, "n": schedule.n, **(meta or {})},
    )


def stage_records(outcomes: Sequence[float], omegas: Sequence[float]) -> list[WeakMeasurementRecord]:
    return [WeakMeasurementRecord(float(o), float(p), i + 1) for i, (p, o) in enumerate(zip(outcomes, omegas))]
