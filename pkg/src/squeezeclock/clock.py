"""Closed-loop clock: LO noise, one interrogation per cycle, integrating feedback.

With ``T = 1`` internally, cycle ``k`` sees the phase

    dphi(t_k) = dphi0(t_k) - alpha * sum_{i<k} dphi_e(t_i)

and the frequency correction ``-alpha dphi_e(t_k) / T`` is applied after it.
Stabilities are reported in units of ``sqrt(gamma / (tau omega**2))``.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from . import _engine, kernels
from ._io import write_csv
from .measurement import calibrate_betas
from .noise import LOTrace, NoiseModel, Spectrum, periodogram
from .protocol import FRINGE_HOP_THRESHOLD, MeasurementSchedule, default_schedule
from .spin import _check_N

#: cycles processed per call of the compiled loop (bounds memory for the draws)
LOOP_CHUNK = 2**16
#: cycles discarded before pilot phases are collected
PILOT_WARMUP_FACTOR = 10.0


@dataclass(frozen=True)
class ClockConfig:
    N: int
    schedule: MeasurementSchedule | None = None
    protocol: str = "adaptive"
    branch: str = "gaussian"
    noise: NoiseModel = field(default_factory=NoiseModel)
    gammaT: float = 0.1
    alpha: float = 0.1
    l: int = 10_000
    seed: int = 0
    omega: float = 1.0
    pilot_runs: int = 10_000
    #: test hook: feedback gain used instead of ``alpha`` (may be 0 for open loop)
    alpha_override: float | None = None

    def __post_init__(self):
        _check_N(self.N)
        if self.protocol not in ("adaptive", "conventional"):
            raise ValueError(f"protocol must be 'adaptive' or 'conventional', got {self.protocol!r}")
        if self.branch not in ("full", "gaussian"):
            raise ValueError(f"branch must be 'full' or 'gaussian', got {self.branch!r}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0,1)")
        if not self.gammaT > 0:
            raise ValueError(f"gammaT must be positive, got {self.gammaT}")
        if int(self.l) != self.l or self.l < 100:
            raise ValueError(f"l must be an integer >= 100, got {self.l}")
        if not self.omega > 0:
            raise ValueError("carrier frequency must be positive")
        if self.alpha_override is not None and not 0 <= self.alpha_override < 1:
            raise ValueError("alpha_override must lie in [0,1)")
        if self.schedule is None:
            object.__setattr__(self, "schedule", default_schedule(self.N))
        if self.protocol == "conventional" and self.schedule.n != 1:
            sched = MeasurementSchedule.conventional(
                self.schedule.kappa, self.schedule.betas[-1], self.schedule.estimator
            )
            object.__setattr__(self, "schedule", sched)

    @property
    def feedback_gain(self) -> float:
        return self.alpha if self.alpha_override is None else self.alpha_override

    @property
    def ramsey_time(self) -> float:
        return self.gammaT / self.noise.gamma


@dataclass(frozen=True)
class ClockRunResult:
    free_phases: np.ndarray
    true_phases: np.ndarray
    estimates: np.ndarray
    corrections: np.ndarray  # Delta omega(t_k) = -alpha e_k / T
    final_correction: float
    mean_offset: float  # mean frequency offset over tau = l T, after the final correction
    sigma_gamma: float  # single-run estimate, normalised units
    fringe_hop_count: int
    gammaT: float
    ramsey_time: float
    alpha: float
    omega: float = 1.0
    betas: tuple[float, ...] = ()

    @property
    def l(self) -> int:
        return len(self.true_phases)

    @property
    def errors(self) -> np.ndarray:
        return self.true_phases - self.estimates

    def to_csv(self, path, meta=None) -> None:
        write_csv(
            path,
            ["cycle", "free_phase", "true_phase", "estimate", "correction"],
            zip(range(1, self.l + 1), self.free_phases, self.true_phases, self.estimates,
                self.corrections),
            meta={"final_correction": self.final_correction, "sigma_gamma": self.sigma_gamma,
                  **(meta or {})},
        )


def final_phase_correction(estimates, alpha: float) -> float:
    """Phase correction applied after the last cycle.

    Evaluates ``sum_i (1-a)**(l-i) (e_i + a sum_{j<i} e_j)`` with one running
    sum and one first-order recursion.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0,1)")
    e = np.asarray(estimates, dtype=float)
    if e.size == 0:
        return 0.0
    prior = np.concatenate(([0.0], np.cumsum(e)[:-1]))
    drive = e + alpha * prior
    acc = signal.lfilter([1.0], [1.0, -(1.0 - alpha)], drive)
    return float(acc[-1])


def ideal_loop_phases(free: np.ndarray, alpha: float) -> np.ndarray:
    """In-loop phases when every estimate equals the true phase."""
    free = np.asarray(free, dtype=float)
    c = signal.lfilter([0.0, -alpha], [1.0, -(1.0 - alpha)], free)
    return free + c


def pilot_phases(
    noise: NoiseModel, gammaT: float, alpha: float, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Representative in-loop phases for gain calibration."""
    warm = int(math.ceil(PILOT_WARMUP_FACTOR / alpha))
    if noise.kind == "white":
        free = noise.generate(gammaT, count + warm, rng).increments
        return ideal_loop_phases(free, alpha)[warm:]
    out = []
    need = count
    seg = max(4 * warm, 2**12)
    while need > 0:
        free = noise.generate(gammaT, seg + warm, rng).increments
        ph = ideal_loop_phases(free, alpha)[warm:]
        out.append(ph[:need])
        need -= len(ph)
    return np.concatenate(out)


def calibrated_schedule(config: ClockConfig, rng: np.random.Generator) -> MeasurementSchedule:
    phases = pilot_phases(config.noise, config.gammaT, config.alpha, config.pilot_runs, rng)
    betas = calibrate_betas(
        config.N, config.schedule, config.pilot_runs, rng, branch=config.branch, phases=phases
    )
    return config.schedule.with_betas(betas)


def run_clock(
    config: ClockConfig,
    rng: np.random.Generator | None = None,
    *,
    trace: LOTrace | None = None,
    calibrate: bool = True,
) -> ClockRunResult:
    """Simulate ``l`` clock cycles.

    Gains are calibrated on pilot phases first unless ``calibrate`` is False,
    in which case the schedule's gains are used as given.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    schedule = calibrated_schedule(config, rng) if calibrate else config.schedule
    if trace is None:
        trace = config.noise.generate(config.gammaT, config.l, rng)
    free = np.asarray(trace.increments, dtype=float)
    if len(free) != config.l:
        raise ValueError(f"trace has {len(free)} cycles, config expects {config.l}")
    a = config.feedback_gain
    true, est = _loop(config, schedule, free, a, rng)
    return _finish(config, schedule, free, true, est, a)


def _loop(config, schedule, free, a, rng):
    l = len(free)
    n = schedule.n
    true = np.empty(l)
    est = np.empty(l)
    betas = np.asarray(schedule.betas, dtype=float)
    omegas = np.asarray(schedule.omegas, dtype=float)
    corr = 0.0
    if config.branch == "gaussian":
        mom = _engine.initial_moments(config.N, schedule.kappa)
        mu0, C0 = mom.mean.copy(), mom.cov.copy()
        for s in range(0, l, LOOP_CHUNK):
            e = min(s + LOOP_CHUNK, l)
            z = rng.standard_normal((e - s, n))
            corr = kernels.gauss_clock_loop(
                np.ascontiguousarray(free[s:e]), a, corr, mu0, C0, mom.mean_z,
                omegas, betas, z, true[s:e], est[s:e], schedule.estimator == "arcsin",
            )
        return true, est
    for k in range(l):
        phi = free[k] + corr
        out = _engine.run_batch(
            config.N, schedule.kappa, omegas, betas, np.array([phi]), "full", rng,
            estimator=schedule.estimator,
        )
        true[k] = phi
        est[k] = out.estimate[0]
        corr -= a * est[k]
    return true, est


def _finish(config, schedule, free, true, est, a) -> ClockRunResult:
    T = config.ramsey_time
    l = len(true)
    fc = final_phase_correction(est, a) if a > 0 else float(np.sum(est))
    offset = (float(np.sum(true)) - fc) / (l * T)
    # |mean offset / omega| in units of sqrt(gamma/(tau omega^2)); omega cancels
    sigma = abs(offset) * T * math.sqrt(l / config.gammaT)
    return ClockRunResult(
        free_phases=free,
        true_phases=true,
        estimates=est,
        corrections=-a * est / T,
        final_correction=fc,
        mean_offset=offset,
        sigma_gamma=sigma,
        fringe_hop_count=int(np.sum(np.abs(true - est) > FRINGE_HOP_THRESHOLD)),
        gammaT=config.gammaT,
        ramsey_time=T,
        alpha=a,
        omega=config.omega,
        betas=tuple(schedule.betas),
    )


def stability(results: ClockRunResult | Sequence[ClockRunResult]) -> float:
    """Ensemble ``sigma_gamma = sqrt(<(sum(dphi - dphi_e))^2> / (l gammaT))``."""
    return stability_with_error(results)[0]


def stability_with_error(results) -> tuple[float, float]:
    if isinstance(results, ClockRunResult):
        results = [results]
    results = list(results)
    if not results:
        raise ValueError("stability needs at least one run")
    x = np.array([
        (r.mean_offset * r.ramsey_time) ** 2 * r.l / r.gammaT for r in results
    ])
    ms = float(x.mean())
    sigma = math.sqrt(ms)
    if len(x) < 2 or sigma == 0:
        return sigma, float("nan") if len(x) < 2 else 0.0
    return sigma, float(x.std(ddof=1) / math.sqrt(len(x))) / (2 * sigma)


def uncorrelated_stability(result: ClockRunResult) -> tuple[float, float]:
    """``sqrt(<(dphi - dphi_e)^2> / gammaT)`` with its standard error.

    Valid when per-cycle errors are uncorrelated (white noise, small alpha).
    """
    sq = result.errors**2
    ms = float(sq.mean())
    sigma = math.sqrt(ms / result.gammaT)
    if sigma == 0:
        return 0.0, 0.0
    se = float(sq.std(ddof=1) / math.sqrt(sq.size)) / result.gammaT / (2 * sigma)
    return sigma, se


def locked_spectrum(result: ClockRunResult, T: float | None = None) -> Spectrum:
    """Periodogram of the locked frequency series ``dphi(t_k) / T``."""
    T = result.ramsey_time if T is None else T
    if result.l < 2**10:
        raise ValueError(f"locked spectrum needs l >= 1024 cycles, got {result.l}")
    return periodogram(result.true_phases / T, T)


def free_spectrum(result: ClockRunResult, T: float | None = None) -> Spectrum:
    T = result.ramsey_time if T is None else T
    return periodogram(result.free_phases / T, T)


def run_ensemble(config: ClockConfig, runs: int, seed: int | None = None,
                 calibrate: bool = True) -> list[ClockRunResult]:
    """Independent runs with seeds spawned from ``seed``; gains calibrated once."""
    ss = np.random.SeedSequence(config.seed if seed is None else seed)
    cal_seed, *run_seeds = ss.spawn(runs + 1)
    cfg = config
    if calibrate:
        cfg = replace(config, schedule=calibrated_schedule(config, np.random.default_rng(cal_seed)))
    if cfg.branch == "full" and cfg.l * runs > 10**6:
        warnings.warn("full-quantum clock runs of this size are slow", RuntimeWarning, stacklevel=2)
    return [run_clock(cfg, np.random.default_rng(s), calibrate=False) for s in run_seeds]
