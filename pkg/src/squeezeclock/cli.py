"""Command-line driver: validated experiment specs, seeded runs, CSV output.

Usage::

    squeezeclock --command simulate --seed 1 --N 1000 --gammaT 0.1 --out run.csv
    squeezeclock --config sweep.json --workers 4

A spec is a JSON object or ``key=value`` text (one pair per line or separated
by whitespace). Flags override the config file. Every task derives its seed
from the master seed and its position in the task list, so results do not
depend on the worker count.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import __version__
from ._backend import selected_backend
from ._io import write_csv
from .analytics import analytic_report, n_max, reference_limits
from .clock import (
    ClockConfig,
    free_spectrum,
    locked_spectrum,
    run_ensemble,
    stability_with_error,
)
from .noise import NoiseModel, average_spectra
from .optimize import Candidate, optimize_stability
from .protocol import ESTIMATORS, MeasurementSchedule, default_schedule, ramped_schedule

COMMANDS = ("simulate", "sweep-ramsey", "sweep-N", "spectrum", "analytic", "optimize")


class SpecError(ValueError):
    """Invalid experiment spec; ``errors`` lists every violation."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ExperimentSpec:
    command: str
    seed: int
    out: str = ""
    N: int = 1000
    gammaT: float = 0.1
    alpha: float = 0.1
    protocol: str = "adaptive"
    branch: str = "gaussian"
    noise: str = "white"
    decades_below: int = 4
    l: int = 10_000
    replicates: int = 1
    workers: int = 1
    kappa: float | None = None
    n: int | None = None
    omega_scale: float = 1.0
    omega_ramp: float = 1.0
    estimator: str = "linear"
    pilot_runs: int = 10_000
    gammaT_grid: tuple[float, ...] = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4)
    N_grid: tuple[int, ...] = (100, 1000, 10_000)
    protocols: tuple[str, ...] = ("adaptive", "conventional")
    kappa_grid: tuple[float, ...] = ()
    budget: int = 100

    def schedule(self, N: int | None = None, protocol: str | None = None,
                 kappa: float | None = None) -> MeasurementSchedule:
        """Schedule resolved from the spec; unset fields come from ``default_schedule``."""
        N = self.N if N is None else N
        protocol = self.protocol if protocol is None else protocol
        kappa = self.kappa if kappa is None else kappa
        if protocol == "conventional":
            return MeasurementSchedule.conventional(
                math.sqrt(N) if kappa is None else kappa, estimator=self.estimator
            )
        d = default_schedule(N)
        sched = ramped_schedule(
            N, d.kappa if kappa is None else kappa, d.n if self.n is None else self.n,
            self.omega_scale, self.omega_ramp,
        )
        return replace(sched, estimator=self.estimator)

    def clock_config(self, **over) -> ClockConfig:
        N = over.pop("N", self.N)
        protocol = over.pop("protocol", self.protocol)
        kappa = over.pop("kappa", None)
        base = dict(
            N=N,
            schedule=self.schedule(N, protocol, kappa),
            protocol=protocol,
            branch=self.branch,
            noise=NoiseModel(self.noise, decades_below=self.decades_below),
            gammaT=self.gammaT,
            alpha=self.alpha,
            l=self.l,
            seed=self.seed,
            pilot_runs=self.pilot_runs,
        )
        base.update(over)
        return ClockConfig(**base)

    def resolved(self) -> dict:
        """Full configuration minus fields that cannot change results (output path, workers)."""
        d = asdict(self)
        d.pop("out")
        d.pop("workers")
        if self.command != "analytic" or self.N >= 100:
            try:
                sched = self.schedule()
                d["kappa"] = sched.kappa
                d["n"] = sched.n
            except ValueError:
                pass
        return d


_FIELDS = {f.name: f for f in fields(ExperimentSpec)}
_TUPLES = {"gammaT_grid": float, "N_grid": int, "protocols": str, "kappa_grid": float}
_INTS = {"seed", "N", "decades_below", "l", "replicates", "workers", "n", "pilot_runs", "budget"}
_FLOATS = {"gammaT", "alpha", "kappa", "omega_scale", "omega_ramp"}


def _parse_text(raw: str) -> dict:
    raw = raw.strip()
    if not raw:
        return {}
    if raw.startswith("{"):
        data = json.loads(raw)
        if not isinstance(data, dict):
            raise SpecError(["config must be a JSON object"])
        return data
    out = {}
    for tok in raw.split():
        key, sep, val = tok.partition("=")
        if not sep:
            raise SpecError([f"cannot parse {tok!r}: expected key=value"])
        out[key.strip()] = val.strip()
    return out


def _coerce(key, val, errors):
    if key in _TUPLES:
        kind = _TUPLES[key]
        items = val.split(",") if isinstance(val, str) else val
        if not isinstance(items, (list, tuple)):
            items = [items]
        try:
            return tuple(kind(float(x)) if kind is int else kind(x) for x in items if x != "")
        except (TypeError, ValueError):
            errors.append(f"{key} must be a list of {kind.__name__} values")
            return None
    if val is None or val == "" or val == "none":
        return None
    try:
        if key in _INTS:
            f = float(val)
            if f != int(f):
                raise ValueError
            return int(f)
        if key in _FLOATS:
            return float(val)
    except (TypeError, ValueError):
        errors.append(f"{key} must be {'an integer' if key in _INTS else 'a number'}, got {val!r}")
        return None
    return str(val)


def validate_spec(raw) -> ExperimentSpec | list[str]:
    """Parse and check a spec; return it, or the list of every violation found."""
    try:
        return parse_spec(raw)
    except SpecError as exc:
        return exc.errors


def parse_spec(raw, overrides: dict | None = None) -> ExperimentSpec:
    """Like :func:`validate_spec` but raises :class:`SpecError`."""
    errors: list[str] = []
    if isinstance(raw, dict):
        data = dict(raw)
    else:
        try:
            data = _parse_text(raw or "")
        except json.JSONDecodeError as exc:
            raise SpecError([f"invalid JSON: {exc.msg}"]) from None
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(data) - set(_FIELDS))
    for key in unknown:
        errors.append(f"unknown key {key!r}")
    vals = {}
    for key, val in data.items():
        if key in _FIELDS:
            v = _coerce(key, val, errors)
            if v is not None or key in ("kappa", "n"):
                vals[key] = v
    if "seed" not in vals:
        errors.append("seed is required")
    if "command" not in vals:
        errors.append("command is required")
    _check_values(vals, errors)
    if errors:
        raise SpecError(errors)
    return ExperimentSpec(**vals)


def _check_values(v: dict, errors: list[str]) -> None:
    def bad(cond, msg):
        if cond:
            errors.append(msg)

    cmd = v.get("command")
    bad(cmd is not None and cmd not in COMMANDS, f"command must be one of {list(COMMANDS)}, got {cmd!r}")
    N = v.get("N", 1000)
    bad(N < 2 or N % 2, f"N must be an even integer >= 2, got {N}")
    alpha = v.get("alpha", 0.1)
    bad(not 0 < alpha < 1, "alpha must lie in (0,1)")
    bad(not v.get("gammaT", 0.1) > 0, "gammaT must be positive")
    bad(v.get("l", 10_000) < 100, "l must be >= 100")
    bad(v.get("replicates", 1) < 1, "replicates must be >= 1")
    bad(v.get("workers", 1) < 1, "workers must be >= 1")
    bad(v.get("pilot_runs", 10_000) < 1000, "pilot_runs must be >= 1000")
    bad(v.get("budget", 100) < 50, "budget must be >= 50")
    bad(v.get("decades_below", 4) < 2, "decades_below must be >= 2")
    for key, allowed in (("protocol", ("adaptive", "conventional")), ("branch", ("full", "gaussian")),
                         ("noise", ("white", "pink")), ("estimator", ESTIMATORS)):
        bad(key in v and v[key] not in allowed, f"{key} must be one of {list(allowed)}, got {v.get(key)!r}")
    k = v.get("kappa")
    bad(k is not None and not k > 0, "kappa must be positive")
    n = v.get("n")
    bad(n is not None and n < 1, "n must be >= 1")
    bad(not v.get("omega_scale", 1.0) > 0, "omega_scale must be positive")
    for key in ("gammaT_grid", "N_grid", "protocols"):
        bad(key in v and len(v[key]) == 0, f"{key} must not be empty")
    bad(any(not g > 0 for g in v.get("gammaT_grid", ())), "gammaT_grid entries must be positive")
    bad(any(x < 100 or x % 2 for x in v.get("N_grid", ())), "N_grid entries must be even and >= 100")
    bad(any(p not in ("adaptive", "conventional") for p in v.get("protocols", ())),
        "protocols entries must be 'adaptive' or 'conventional'")
    bad(any(not x > 0 for x in v.get("kappa_grid", ())), "kappa_grid entries must be positive")
    uses_default = cmd in ("simulate", "sweep-ramsey", "spectrum", "optimize", "analytic")
    bad(uses_default and N < 100 and v.get("protocol", "adaptive") == "adaptive" and k is None,
        "N must be >= 100 for the default schedule unless kappa and n are given")


# tasks ---------------------------------------------------------------------

def task_seed(master: int, index: int) -> int:
    """Seed of task ``index``; a pure function of the master seed and the index."""
    return int(np.random.SeedSequence(master, spawn_key=(index,)).generate_state(1, np.uint64)[0])


def _score(cfg: ClockConfig, replicates: int, seed: int) -> tuple[float, float, int]:
    """Stability with error bar: pooled per-cycle errors for white noise, ensemble for pink."""
    runs = run_ensemble(cfg, replicates, seed=seed)
    hops = sum(r.fringe_hop_count for r in runs)
    if cfg.noise.kind == "white":
        sq = np.concatenate([r.errors**2 for r in runs])
        ms = float(sq.mean())
        sigma = math.sqrt(ms / cfg.gammaT)
        se = float(sq.std(ddof=1) / math.sqrt(sq.size)) / cfg.gammaT / (2 * sigma) if sigma else 0.0
        return sigma, se, hops
    sigma, se = stability_with_error(runs)
    return sigma, se, hops


def _ramsey_task(args):
    spec, protocol, gT, seed = args
    cfg = spec.clock_config(protocol=protocol, gammaT=gT)
    sigma, se, hops = _score(cfg, spec.replicates, seed)
    return (protocol, gT, cfg.schedule.kappa, sigma, se, hops)


def _kappa_for(spec: ExperimentSpec, N: int, protocol: str, seed: int):
    if not spec.kappa_grid:
        return spec.kappa
    best, best_s = None, math.inf
    for k in spec.kappa_grid:
        if protocol == "adaptive" and k > math.sqrt(N):
            continue
        s, _, _ = _score(spec.clock_config(N=N, protocol=protocol, kappa=k), spec.replicates, seed)
        if s < best_s:
            best, best_s = k, s
    return best


def _n_task(args):
    spec, protocol, N, seed = args
    kappa = _kappa_for(spec, N, protocol, seed)
    cfg = spec.clock_config(N=N, protocol=protocol, kappa=kappa)
    sigma, se, hops = _score(cfg, spec.replicates, seed)
    sql, heis, _ = reference_limits(N, spec.gammaT)
    return (protocol, N, cfg.schedule.kappa, sigma, se, hops, heis, sql)


def _map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


# commands ------------------------------------------------------------------

def _meta(spec: ExperimentSpec) -> dict:
    return {"command": spec.command, "seed": spec.seed, "version": __version__,
            "backend": selected_backend(), "config": spec.resolved()}


def cmd_simulate(spec, out):
    cfg = spec.clock_config()
    runs = run_ensemble(cfg, spec.replicates, seed=task_seed(spec.seed, 0))
    rows = []
    for i, r in enumerate(runs):
        sq = r.errors**2
        rows.append((i + 1, r.sigma_gamma, math.sqrt(sq.mean() / r.gammaT), r.mean_offset,
                     r.final_correction, r.fringe_hop_count))
    sigma, se = stability_with_error(runs)
    meta = {**_meta(spec), "betas": list(runs[0].betas), "ensemble_sigma_gamma": sigma,
            "ensemble_stderr": se}
    write_csv(out, ["replicate", "sigma_gamma", "uncorrelated_sigma_gamma", "mean_offset",
                    "final_correction", "fringe_hops"], rows, meta)


def cmd_sweep_ramsey(spec, out):
    tasks = [(spec, p, g, task_seed(spec.seed, i))
             for i, (p, g) in enumerate((p, g) for p in spec.protocols for g in spec.gammaT_grid)]
    rows = _map(_ramsey_task, tasks, spec.workers)
    write_csv(out, ["protocol", "gammaT", "kappa", "sigma_gamma", "stderr", "fringe_hops"], rows,
              _meta(spec))


def cmd_sweep_n(spec, out):
    tasks = [(spec, p, N, task_seed(spec.seed, i))
             for i, (p, N) in enumerate((p, N) for p in spec.protocols for N in spec.N_grid)]
    rows = _map(_n_task, tasks, spec.workers)
    write_csv(out, ["protocol", "N", "kappa", "sigma_gamma", "stderr", "fringe_hops", "heisenberg",
                    "sql"], rows, _meta(spec))


def cmd_spectrum(spec, out):
    cfg = spec.clock_config()
    runs = run_ensemble(cfg, spec.replicates, seed=task_seed(spec.seed, 0))
    locked = average_spectra(locked_spectrum(r) for r in runs)
    free = average_spectra(free_spectrum(r) for r in runs)
    meta = {**_meta(spec), "lowest_decade_locked": locked.lowest_decade()[0],
            "lowest_decade_free": free.lowest_decade()[0]}
    write_csv(out, ["frequency", "S_locked", "S_free"],
              zip(locked.frequency, locked.power, free.power), meta)


def cmd_analytic(spec, out):
    sched = spec.schedule(protocol="adaptive")
    rep = analytic_report(spec.N, sched.kappa, sched.n, sched.omegas, spec.gammaT)
    meta = {**_meta(spec), "n_max": n_max(spec.N, sched.kappa, spec.gammaT),
            "total": rep.total, "max_term": rep.max_term()}
    rep.to_csv(out, meta)


def cmd_optimize(spec, out):
    sched = spec.schedule()
    start = Candidate(sched.kappa, sched.n, spec.gammaT, spec.omega_scale, spec.omega_ramp)
    res = optimize_stability(
        spec.N, spec.noise, spec.protocol, spec.branch, spec.budget, start=start,
        seed=task_seed(spec.seed, 0), l=spec.l, runs=spec.replicates, alpha=spec.alpha,
        pilot_runs=spec.pilot_runs, estimator=spec.estimator,
    )
    rows = [(i + 1, c.kappa, c.n, c.gammaT, c.omega_scale, c.omega_ramp, s, e)
            for i, (c, s, e) in enumerate(res.history)]
    meta = {**_meta(spec), "best_kappa": res.kappa, "best_n": res.n, "best_gammaT": res.gammaT,
            "best_sigma_gamma": res.sigma, "best_stderr": res.stderr}
    write_csv(out, ["evaluation", "kappa", "n", "gammaT", "omega_scale", "omega_ramp",
                    "sigma_gamma", "stderr"], rows, meta)
    return res.summary()


_DISPATCH = {
    "simulate": cmd_simulate,
    "sweep-ramsey": cmd_sweep_ramsey,
    "sweep-N": cmd_sweep_n,
    "spectrum": cmd_spectrum,
    "analytic": cmd_analytic,
    "optimize": cmd_optimize,
}


def run_experiment(spec: ExperimentSpec) -> tuple[int, list[str]]:
    """Run a validated spec; returns the exit status and the files written.

    Output goes to a temporary file next to the target and is moved into place
    only on success, so a failed run leaves nothing behind.
    """
    out = spec.out or f"{spec.command}.csv"
    d = os.path.dirname(os.path.abspath(out))
    fd, tmp = tempfile.mkstemp(prefix=".partial-", suffix=".csv", dir=d)
    os.close(fd)
    try:
        summary = _DISPATCH[spec.command](spec, tmp)
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    if summary:
        print(summary)
    return 0, [out]


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="squeezeclock", description=__doc__.split("\n")[0])
    p.add_argument("--command", choices=COMMANDS)
    p.add_argument("--config", help="JSON or key=value file")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("--N", type=int)
    p.add_argument("--gammaT", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--protocol")
    p.add_argument("--branch")
    p.add_argument("--noise")
    p.add_argument("--l", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="any other spec field, repeatable")
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        raw = ""
        if args.config:
            with open(args.config) as fh:
                raw = fh.read()
        over = {k: getattr(args, k) for k in ("command", "seed", "workers", "out", "N", "gammaT",
                                              "alpha", "protocol", "branch", "noise", "l",
                                              "replicates")}
        for item in args.set:
            key, sep, val = item.partition("=")
            if not sep:
                raise SpecError([f"--set expects KEY=VALUE, got {item!r}"])
            over[key] = val
        spec = parse_spec(raw, over)
        status, _ = run_experiment(spec)
        return status
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
