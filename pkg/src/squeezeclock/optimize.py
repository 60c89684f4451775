"""Derivative-free minimisation of the clock stability over protocol parameters.

Candidates are scored by simulating the locked clock with gains recalibrated
for each candidate. Every candidate reuses the same seed, so LO noise, pilot
phases and quantum/light noise are common random numbers across candidates
and differences between scores are far less noisy than the scores themselves.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .clock import ClockConfig, run_clock, run_ensemble, stability_with_error, uncorrelated_stability
from .noise import NoiseModel
from .protocol import MeasurementSchedule, default_schedule, ramped_schedule

AXES = ("kappa", "n", "gammaT", "omega_scale", "omega_ramp")


@dataclass(frozen=True)
class Candidate:
    kappa: float
    n: int
    gammaT: float
    omega_scale: float = 1.0
    omega_ramp: float = 1.0

    def schedule(self, N: int, protocol: str, estimator: str = "linear") -> MeasurementSchedule:
        if protocol == "conventional":
            return MeasurementSchedule.conventional(self.kappa, estimator=estimator)
        return ramped_schedule(N, self.kappa, self.n, self.omega_scale, self.omega_ramp)


@dataclass
class OptimizationResult:
    kappa: float
    n: int
    gammaT: float
    omegas: tuple[float, ...]
    betas: tuple[float, ...]
    sigma: float
    stderr: float
    evaluations: int
    start_sigma: float
    history: list[tuple[Candidate, float, float]] = field(default_factory=list)

    @property
    def candidate(self) -> Candidate:
        return self.history_best()[0]

    def history_best(self):
        return min(self.history, key=lambda h: h[1])

    def summary(self) -> str:
        return "\n".join([
            f"kappa       {self.kappa:.6g}",
            f"n           {self.n}",
            f"gammaT      {self.gammaT:.6g}",
            f"sigma_gamma {self.sigma:.6g} +- {self.stderr:.2g}",
            f"start       {self.start_sigma:.6g}",
            f"evaluations {self.evaluations}",
        ])


class BudgetExhausted(UserWarning):
    """Evaluation budget ran out before one full coordinate sweep."""


class StabilityObjective:
    """Clock stability for a candidate; white noise uses one long run, pink an ensemble."""

    def __init__(self, N: int, noise: str = "white", protocol: str = "adaptive",
                 branch: str = "gaussian", *, l: int = 100_000,
                 runs: int = 20, alpha: float = 0.1, pilot_runs: int = 10_000, seed: int = 0,
                 estimator: str = "linear"):
        self.N = N
        self.noise = NoiseModel(noise)
        self.protocol = protocol
        self.branch = branch
        self.l = l
        self.runs = runs
        self.alpha = alpha
        self.pilot_runs = pilot_runs
        self.seed = seed
        self.estimator = estimator
        self.cache: dict[Candidate, tuple[float, float, tuple]] = {}

    def __call__(self, cand: Candidate) -> tuple[float, float, tuple]:
        if cand in self.cache:
            return self.cache[cand]
        cfg = ClockConfig(
            self.N, cand.schedule(self.N, self.protocol, self.estimator), self.protocol, self.branch,
            self.noise, cand.gammaT, self.alpha, self.l, self.seed, pilot_runs=self.pilot_runs,
        )
        if self.noise.kind == "white":
            res = run_clock(cfg, np.random.default_rng(self.seed))
            sigma, se = uncorrelated_stability(res)
            betas = res.betas
        else:
            runs = run_ensemble(cfg, self.runs, seed=self.seed)
            sigma, se = stability_with_error(runs)
            betas = runs[0].betas
        out = (sigma, se, betas)
        self.cache[cand] = out
        return out


def _neighbours(c: Candidate, axis: str, step: dict, protocol: str, bounds: dict):
    if axis == "n":
        if protocol == "conventional":
            return []
        s = max(int(round(step["n"])), 1)
        vals = [c.n - s, c.n + s]
        return [replace(c, n=v) for v in vals if bounds["n"][0] <= v <= bounds["n"][1]]
    if protocol == "conventional" and axis in ("omega_scale", "omega_ramp"):
        return []
    cur = getattr(c, axis)
    f = step[axis]
    vals = [cur / f, cur * f] if axis != "omega_ramp" else [cur - (f - 1.0), cur + (f - 1.0)]
    lo, hi = bounds[axis]
    return [replace(c, **{axis: float(v)}) for v in vals if lo <= v <= hi]


def optimize_stability(
    N: int,
    noise: str = "white",
    protocol: str = "adaptive",
    branch: str = "gaussian",
    budget: int = 100,
    rng: np.random.Generator | None = None,
    *,
    axes: tuple[str, ...] = AXES,
    start: Candidate | None = None,
    start_gammaT: float = 0.1,
    objective: StabilityObjective | None = None,
    bounds: dict | None = None,
    **objective_kwargs,
) -> OptimizationResult:
    """Coordinate descent with step halving from the default schedule.

    The returned point is the best evaluated one, so it is never worse than
    the start under the common-random-number objective.
    """
    if budget < 50:
        raise ValueError(f"budget must be >= 50, got {budget}")
    unknown = set(axes) - set(AXES)
    if unknown:
        raise ValueError(f"unknown axes {sorted(unknown)}")
    seed = int(rng.integers(2**63)) if rng is not None else objective_kwargs.pop("seed", 0)
    obj = objective or StabilityObjective(N, noise, protocol, branch, seed=seed, **objective_kwargs)
    if start is None:
        d = default_schedule(N) if N >= 100 else None
        kappa = d.kappa if d else math.sqrt(N) / 2
        n = d.n if d else 3
        if protocol == "conventional":
            kappa, n = math.sqrt(N), 1
        start = Candidate(kappa, n, start_gammaT)
    bnds = {
        "kappa": (0.5, math.sqrt(N) * 2),
        "n": (2, 200),
        "gammaT": (1e-4, 2.0),
        "omega_scale": (1e-3, 1e3),
        "omega_ramp": (0.2, 2.0),
        **(bounds or {}),
    }
    step = {"kappa": 1.5, "n": max(start.n // 4, 1), "gammaT": 1.5, "omega_scale": 2.0,
            "omega_ramp": 1.2}
    history = []

    def evaluate(c):
        sigma, se, betas = obj(c)
        history.append((c, sigma, se))
        return sigma

    best = start
    best_val = evaluate(start)
    start_val = best_val
    evals = 1
    full_sweep = False
    while evals < budget:
        improved = False
        cut = False
        for axis in axes:
            for cand in _neighbours(best, axis, step, protocol, bnds):
                if evals >= budget:
                    cut = True
                    break
                fresh = cand not in obj.cache
                val = evaluate(cand)
                evals += int(fresh)
                if val < best_val:
                    best, best_val, improved = cand, val, True
        full_sweep = full_sweep or not cut
        if not improved:
            converged = True
            for axis in axes:
                if axis == "n":
                    if step["n"] > 1:
                        step["n"] = max(step["n"] // 2, 1)
                        converged = False
                elif step[axis] > 1.02:
                    step[axis] = math.sqrt(step[axis])
                    converged = False
            if converged:
                break
    if not full_sweep:
        warnings.warn("budget exhausted before a full sweep", BudgetExhausted, stacklevel=2)
    sigma, se, betas = obj(best)
    sched = best.schedule(N, protocol, obj.estimator)
    return OptimizationResult(
        kappa=best.kappa,
        n=sched.n,
        gammaT=best.gammaT,
        omegas=sched.omegas,
        betas=tuple(betas),
        sigma=sigma,
        stderr=se,
        evaluations=evals,
        start_sigma=start_val,
        history=history,
    )


def kappa_scan(
    N: int,
    kappas,
    protocol: str = "adaptive",
    gammaT: float = 0.1,
    *,
    n: int | None = None,
    omega_scale: float = 1.0,
    objective: StabilityObjective | None = None,
    **objective_kwargs,
) -> tuple[np.ndarray, np.ndarray]:
    """Stability and its standard error on a grid of squeezing parameters.

    All grid points share one seed, so the minimiser of the returned curve is
    a common-random-number comparison.
    """
    obj = objective or StabilityObjective(N, protocol=protocol, **objective_kwargs)
    if n is None:
        n = default_schedule(N).n if N >= 100 else 3
    sig, err = [], []
    for k in kappas:
        s, e, _ = obj(Candidate(float(k), n, gammaT, omega_scale))
        sig.append(s)
        err.append(e)
    return np.array(sig), np.array(err)
