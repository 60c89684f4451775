"""One Ramsey interrogation: adaptive weak-measurement sequence or conventional."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from . import _engine
from ._io import write_csv
from .measurement import PhaseEstimate, WeakMeasurementRecord
from .spin import EnsembleMoments, SpinDomainError, _check_N

FRINGE_HOP_THRESHOLD = math.pi / 2
ESTIMATORS = ("linear", "arcsin")


@dataclass(frozen=True)
class MeasurementSchedule:
    """``n`` measurements: ``n - 1`` weak ones at ``omegas`` and a projective one.

    ``estimator`` sets how the projective outcome is read: ``"linear"`` gives
    ``beta j3 / <J_z>``, ``"arcsin"`` gives ``beta arcsin(j3 / <J_z>)`` with the
    ratio clipped to ``[-1, 1]``.
    """

    kappa: float
    n: int
    omegas: tuple[float, ...] = ()
    betas: tuple[float, ...] | None = None
    estimator: str = "linear"

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        omegas = tuple(float(o) for o in np.asarray(self.omegas, dtype=float).reshape(-1))
        if len(omegas) != self.n - 1:
            raise ValueError(f"need {self.n - 1} weak strengths, got {len(omegas)}")
        if any(not o > 0 or not math.isfinite(o) for o in omegas):
            raise ValueError("weak measurement strengths must be positive and finite")
        betas = (1.0,) * self.n if self.betas is None else tuple(
            float(b) for b in np.asarray(self.betas, dtype=float).reshape(-1)
        )
        if len(betas) != self.n:
            raise ValueError(f"need {self.n} gains, got {len(betas)}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "betas", betas)

    def with_betas(self, betas) -> "MeasurementSchedule":
        return replace(self, betas=tuple(np.asarray(betas, dtype=float)))

    @classmethod
    def conventional(
        cls, kappa: float, beta: float = 1.0, estimator: str = "linear"
    ) -> "MeasurementSchedule":
        return cls(kappa, 1, (), (beta,), estimator)


@dataclass(frozen=True)
class SequenceResult:
    true_phase: float
    estimate: float
    residual: float
    records: tuple[tuple[WeakMeasurementRecord | None, PhaseEstimate], ...] = field(default=())
    final_outcome: float = float("nan")

    @property
    def fringe_hop(self) -> bool:
        return abs(self.residual) > FRINGE_HOP_THRESHOLD

    def to_csv(self, path) -> None:
        """Columns ``stage, omega, outcome, estimate, residual`` (residual after the stage)."""
        rows = []
        running = 0.0
        for i, (rec, est) in enumerate(self.records):
            running += est.value
            omega = rec.strength if rec is not None else float("inf")
            outcome = rec.outcome if rec is not None else self.final_outcome
            rows.append((i + 1, omega, outcome, est.value, self.true_phase - running))
        write_csv(
            path,
            ["stage", "omega", "outcome", "estimate", "residual"],
            rows,
            meta={"true_phase": self.true_phase, "estimate": self.estimate},
        )


def default_schedule(N: int) -> MeasurementSchedule:
    """``kappa = ln sqrt(N) + 2``, ``n = ceil(3 ln N)``, ``Omega_i = N**(-1 + i/(n+1))``."""
    if N < 100:
        raise SpinDomainError(f"default schedule is defined for N >= 100, got {N}")
    kappa = math.log(math.sqrt(N)) + 2.0
    n = math.ceil(3.0 * math.log(N))
    i = np.arange(1, n)
    return MeasurementSchedule(kappa, n, tuple(float(N) ** (-1.0 + i / (n + 1.0))), None)


def ramped_schedule(
    N: int, kappa: float, n: int, scale: float = 1.0, ramp: float = 1.0
) -> MeasurementSchedule:
    """Default-shaped schedule with ``Omega_i = scale * N**(-1 + ramp*i/(n+1))``."""
    i = np.arange(1, n)
    omegas = scale * float(N) ** (-1.0 + ramp * i / (n + 1.0))
    return MeasurementSchedule(kappa, n, tuple(omegas), None)


@dataclass
class SequenceBatch:
    """Many independent sequences run together."""

    phi0: np.ndarray
    estimate: np.ndarray
    residual: np.ndarray
    betas: np.ndarray
    stage_mean_square: np.ndarray
    outcomes: np.ndarray | None = None
    stage_estimates: np.ndarray | None = None

    @property
    def fringe_hops(self) -> np.ndarray:
        return np.abs(self.residual) > FRINGE_HOP_THRESHOLD

    def rms_residual(self) -> tuple[float, float]:
        """``sqrt(<dPhi_n^2>)`` with its standard error."""
        sq = self.residual**2
        ms = float(sq.mean())
        rms = math.sqrt(ms)
        se = float(sq.std(ddof=1) / math.sqrt(sq.size)) / (2 * rms) if rms > 0 else 0.0
        return rms, se


def simulate_sequences(
    N: int,
    schedule: MeasurementSchedule,
    phi0,
    branch: str,
    rng: np.random.Generator,
    *,
    calibrate: bool = False,
    record: bool = False,
    moments: EnsembleMoments | None = None,
    randoms=None,
) -> SequenceBatch:
    """Run one sequence per entry of ``phi0``.

    With ``calibrate=True`` the schedule's gains are replaced stage by stage by
    least-squares fits on this batch; the fitted gains are returned in
    ``betas``.
    """
    N = _check_N(N)
    out = _engine.run_batch(
        N,
        schedule.kappa,
        schedule.omegas,
        schedule.betas,
        phi0,
        branch,
        rng,
        calibrate=calibrate,
        record=record,
        moments=moments,
        randoms=randoms,
        estimator=schedule.estimator,
    )
    return SequenceBatch(
        phi0=out.phi0,
        estimate=out.estimate,
        residual=out.residual,
        betas=out.betas,
        stage_mean_square=out.stage_ms,
        outcomes=out.outcomes,
        stage_estimates=out.stage_estimates,
    )


def _single(N, schedule, phi0, branch, rng, moments=None) -> SequenceResult:
    if not math.isfinite(phi0):
        raise ValueError("phase must be finite")
    out = simulate_sequences(
        N, schedule, np.array([phi0]), branch, rng, record=True, moments=moments
    )
    records = []
    total = 0.0
    for i in range(schedule.n):
        e = float(out.stage_estimates[0, i])
        total += e
        rec = None
        if i < schedule.n - 1:
            rec = WeakMeasurementRecord(schedule.omegas[i], float(out.outcomes[0, i]), i + 1)
        records.append((rec, PhaseEstimate(e, schedule.betas[i])))
    return SequenceResult(
        true_phase=float(phi0),
        estimate=total,
        residual=float(phi0) - total,
        records=tuple(records),
        final_outcome=float(out.outcomes[0, -1]),
    )


def run_adaptive_sequence(
    N: int,
    schedule: MeasurementSchedule,
    phi0: float,
    branch: str = "gaussian",
    rng: np.random.Generator | None = None,
    *,
    moments: EnsembleMoments | None = None,
) -> SequenceResult:
    """Imprint ``phi0``, then weak measurements with feedback and a final projective one."""
    if rng is None:
        raise ValueError("an explicit random generator is required")
    return _single(N, schedule, phi0, branch, rng, moments)


def run_conventional_ramsey(
    N: int,
    kappa: float,
    beta: float,
    phi0: float,
    branch: str = "gaussian",
    rng: np.random.Generator | None = None,
    *,
    moments: EnsembleMoments | None = None,
    estimator: str = "linear",
) -> SequenceResult:
    """Single projective measurement, estimate ``beta j3 / <J_z>``.

    ``estimator="arcsin"`` inverts the fringe instead, ``beta arcsin(j3 / <J_z>)``.
    """
    if rng is None:
        raise ValueError("an explicit random generator is required")
    sched = MeasurementSchedule.conventional(kappa, beta, estimator)
    return _single(N, sched, phi0, branch, rng, moments)


def residual_identity_holds(result: SequenceResult) -> bool:
    total = 0.0
    for _, est in result.records:
        total += est.value
    return total == result.estimate and result.residual == result.true_phase - result.estimate


def stage_residuals(result: SequenceResult) -> Sequence[float]:
    out, total = [], 0.0
    for _, est in result.records:
        total += est.value
        out.append(result.true_phase - total)
    return out
