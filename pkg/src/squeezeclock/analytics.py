"""Semi-analytic noise budget of the adaptive protocol and reference curves.

Expectations over the atomic state use an independent-Gaussian surrogate,
``J_z ~ N(<J_z>, var_z)`` and ``J_x ~ N(0, var_x)``, with moments from the
continuum approximation. With ``u = 1 - J_z/<J_z>`` every atomic factor is a
polynomial in ``(u, J_x)``, evaluated by tensorised Gauss-Hermite quadrature.
The LO phase is ``dphi0 ~ N(0, gammaT)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import hermite_e
from scipy import special

from ._io import write_csv
from .spin import EnsembleMoments, gaussian_moments

QUAD_NODES = 64
LIGHT_VARIANCE = 0.5


class QuadratureError(ArithmeticError):
    """Quadrature result is not finite."""


@lru_cache(maxsize=16)
def _hermite(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = hermite_e.hermegauss(nodes)
    return x, w / math.sqrt(2 * math.pi)


def _nodes_for(degree: int, nodes: int) -> int:
    # an m-point rule is exact for polynomials of degree <= 2m - 1
    return max(nodes, (degree + 2) // 2)


def gauss_expect(f, sigma: float, nodes: int = QUAD_NODES) -> float:
    """``E[f(X)]`` for ``X ~ N(0, sigma**2)``."""
    x, w = _hermite(nodes)
    val = float(np.sum(w * f(sigma * x)))
    if not math.isfinite(val):
        raise QuadratureError("non-finite quadrature result")
    return val


def phase_factors(gammaT: float, nodes: int = QUAD_NODES) -> tuple[float, float, float, float]:
    """``<dphi0^2>``, ``2<dphi0 (sin dphi0 - dphi0)>``, ``<(sin dphi0 - dphi0)^2>``, ``<sin^2 dphi0>``."""
    if not gammaT > 0:
        raise ValueError("gammaT must be positive")
    s = math.sqrt(gammaT)
    return (
        gauss_expect(lambda x: x * x, s, nodes),
        2.0 * gauss_expect(lambda x: x * (np.sin(x) - x), s, nodes),
        gauss_expect(lambda x: (np.sin(x) - x) ** 2, s, nodes),
        gauss_expect(lambda x: np.sin(x) ** 2, s, nodes),
    )


class AtomicSurrogate:
    """Gaussian surrogate for ``(u, J_x / <J_z>)``.

    ``su`` and ``sx`` are the standard deviations of ``u = 1 - J_z/<J_z>`` and
    of ``J_x / <J_z>``.
    """

    def __init__(self, moments: EnsembleMoments, nodes: int = QUAD_NODES):
        mz = moments.mean_z
        if not mz > 0:
            raise ValueError("<J_z> must be positive")
        self.moments = moments
        self.su = math.sqrt(max(moments.var_z, 0.0)) / mz
        self.sx2 = moments.second_moment("x") / mz**2
        self.nodes = nodes

    def u_moment(self, power: int, jz_power: int = 0) -> float:
        """``E[u**power (1-u)**jz_power]``."""
        nodes = _nodes_for(power + jz_power, self.nodes)
        return gauss_expect(lambda u: u**power * (1.0 - u) ** jz_power, self.su, nodes)

    def ux_moment(self, power: int, jz_power: int) -> float:
        """``E[u**power (1-u)**jz_power (J_x/<J_z>)**2]`` on the 2-D tensor grid."""
        nodes = _nodes_for(power + jz_power, self.nodes)
        x, w = _hermite(nodes)
        u = self.su * x
        fu = float(np.sum(w * u**power * (1.0 - u) ** jz_power))
        xx, wx = _hermite(self.nodes)
        fx = float(np.sum(wx * (math.sqrt(self.sx2) * xx) ** 2))
        val = fu * fx
        if not math.isfinite(val):
            raise QuadratureError("non-finite quadrature result")
        return val


def closed_form_u_moment(su: float, power: int, jz_power: int = 0) -> float:
    """Exact ``E[u**p (1-u)**q]`` for ``u ~ N(0, su**2)`` by binomial expansion."""
    total = 0.0
    for k in range(jz_power + 1):
        p = power + k
        if p % 2:
            continue
        total += math.comb(jz_power, k) * (-1) ** k * _double_factorial(p - 1) * su**p
    return total


def _double_factorial(k: int) -> float:
    return float(special.factorial2(k, exact=True)) if k > 0 else 1.0


def _moments(N: int, kappa: float, moments: EnsembleMoments | None) -> EnsembleMoments:
    return moments if moments is not None else gaussian_moments(N, kappa)


def jz_noise_terms(
    N: int,
    kappa: float,
    n: int,
    gammaT: float,
    *,
    moments: EnsembleMoments | None = None,
    nodes: int = QUAD_NODES,
) -> tuple[float, float, float]:
    """Contributions of the ``J_z`` spread after ``n`` measurements."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    atoms = AtomicSurrogate(_moments(N, kappa, moments), nodes)
    a1, a2, a3, _ = phase_factors(gammaT, nodes)
    return (
        a1 * atoms.u_moment(2 * n),
        a2 * atoms.u_moment(2 * n - 1, 1),
        a3 * atoms.u_moment(2 * n - 2, 2),
    )


def _check_omegas(omegas, n) -> np.ndarray:
    om = np.asarray(omegas, dtype=float).reshape(-1)
    if len(om) != n - 1:
        raise ValueError(f"need {n - 1} weak strengths, got {len(om)}")
    if np.any(om < 0) or not np.all(np.isfinite(om)):
        raise ValueError("weak strengths must be finite and non-negative")
    return om


def backaction_terms(
    N: int,
    kappa: float,
    n: int,
    omegas,
    gammaT: float,
    *,
    moments: EnsembleMoments | None = None,
    nodes: int = QUAD_NODES,
) -> np.ndarray:
    """Dominant back-action contribution of each weak stage ``i = 1..n-1``."""
    om = _check_omegas(omegas, n)
    atoms = AtomicSurrogate(_moments(N, kappa, moments), nodes)
    _, _, a3, s2 = phase_factors(gammaT, nodes)
    out = np.empty(len(om))
    for k, w in enumerate(om):
        i = k + 1
        if i == 1:
            out[k] = LIGHT_VARIANCE * s2 * atoms.ux_moment(2, 0) * w**2
        else:
            out[k] = LIGHT_VARIANCE * a3 * atoms.ux_moment(2 * i - 2, 2) * w**2
    return out


def probe_noise_terms(
    N: int,
    kappa: float,
    n: int,
    omegas,
    *,
    moments: EnsembleMoments | None = None,
    nodes: int = QUAD_NODES,
) -> np.ndarray:
    """Dominant light-noise contribution of each weak stage ``i = 1..n-1``."""
    om = _check_omegas(omegas, n)
    if np.any(om == 0):
        raise ValueError("probe noise is undefined for a zero-strength stage")
    mom = _moments(N, kappa, moments)
    atoms = AtomicSurrogate(mom, nodes)
    i = np.arange(1, n)
    return np.array(
        [atoms.u_moment(2 * n - 2 * j) * LIGHT_VARIANCE / (mom.mean_z**2 * w**2)
         for j, w in zip(i, om)]
    )


@dataclass(frozen=True)
class AnalyticTermReport:
    jz_terms: tuple[float, float, float]
    backaction_terms: np.ndarray
    probe_terms: np.ndarray
    jy_floor: float
    total: float = field(init=False)

    def __post_init__(self):
        total = (sum(self.jz_terms) + float(np.sum(self.backaction_terms))
                 + float(np.sum(self.probe_terms)) + self.jy_floor)
        object.__setattr__(self, "total", total)

    def max_term(self) -> float:
        vals = [*self.jz_terms, *self.backaction_terms, *self.probe_terms]
        return float(max(vals)) if vals else 0.0

    def rows(self):
        for k, v in enumerate(self.jz_terms):
            yield ("jz", k + 1, v)
        for k, v in enumerate(self.backaction_terms):
            yield ("backaction", k + 1, v)
        for k, v in enumerate(self.probe_terms):
            yield ("probe", k + 1, v)
        yield ("jy_floor", 0, self.jy_floor)
        yield ("total", 0, self.total)

    def to_csv(self, path, meta=None) -> None:
        write_csv(path, ["term", "stage", "value"], self.rows(), meta=meta)


def analytic_report(
    N: int, kappa: float, n: int, omegas, gammaT: float, *, nodes: int = QUAD_NODES
) -> AnalyticTermReport:
    """All dominant terms of ``<dPhi_n^2>`` for unit gains."""
    mom = gaussian_moments(N, kappa)
    return AnalyticTermReport(
        jz_terms=jz_noise_terms(N, kappa, n, gammaT, moments=mom, nodes=nodes),
        backaction_terms=backaction_terms(N, kappa, n, omegas, gammaT, moments=mom, nodes=nodes),
        probe_terms=probe_noise_terms(N, kappa, n, omegas, moments=mom, nodes=nodes)
        if n > 1 else np.empty(0),
        jy_floor=mom.var_y / mom.mean_z**2,
    )


def n_max(N: int, kappa: float, gammaT: float = 0.1, n_limit: int | None = None) -> int:
    """Number of measurements minimising the third ``J_z`` term at fixed ``kappa``.

    ``n_limit`` caps the search; by default it is unbounded.
    """
    return _n_max(int(N), float(kappa), float(gammaT), None if n_limit is None else int(n_limit))


def _log_term3(n: int, su: float) -> float:
    # E[u^k (1-u)^2] = (k-1)!! su^k (1 + (k+1) su^2), k = 2n - 2
    k = 2 * n - 2
    return _log_double_factorial(k - 1) + k * math.log(su) + math.log1p((k + 1) * su**2)


@lru_cache(maxsize=512)
def _n_max(N, kappa, gammaT, n_limit):
    su = AtomicSurrogate(gaussian_moments(N, kappa)).su
    # the phase factor is common to all n; successive terms grow once (2n-1) su^2 > 1
    guess = max(int(0.5 / su**2), 1)
    lo, hi = max(guess - 4, 1), guess + 4
    if n_limit is not None:
        hi = min(hi, n_limit)
        lo = min(lo, hi)
    return min(range(lo, hi + 1), key=lambda n: (_log_term3(n, su), n))


def _log_double_factorial(k: int) -> float:
    if k <= 0:
        return 0.0
    # k!! for odd k = k! / (2^((k-1)/2) ((k-1)/2)!)
    h = (k - 1) // 2
    return math.lgamma(k + 1) - h * math.log(2) - math.lgamma(h + 1)


def stability_upper_bound(N: int, gammaT: float) -> float:
    """``(2/N + ln(sqrt N)/N) / sqrt(gammaT)``."""
    if N < 100:
        raise ValueError(f"the bound is stated for N >= 100, got {N}")
    if not gammaT > 0:
        raise ValueError("gammaT must be positive")
    return (2.0 / N + math.log(math.sqrt(N)) / N) / math.sqrt(gammaT)


def reference_limits(N: float, gammaT: float) -> tuple[float, float, float]:
    """``(SQL, Heisenberg, N**(-2/3))`` curves in normalised units."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if not gammaT > 0:
        raise ValueError("gammaT must be positive")
    r = math.sqrt(gammaT)
    return N**-0.5 / r, 1.0 / N / r, N ** (-2.0 / 3.0) / r


def sigma_max(a: float, l: int) -> float:
    """Phase width at which ``P(max_k |dphi_k| <= a) = 1/2`` over ``l`` cycles."""
    if not a > 0:
        raise ValueError("a must be positive")
    if l < 10:
        raise ValueError(f"l must be >= 10, got {l}")
    L = math.log(2 / math.pi) + 2 * math.log(l) - 2 * math.log(math.log(2))
    if L <= 1:
        raise ValueError(f"closed form undefined for l={l}")
    return a / math.sqrt(L - math.log(L))


def prob_all_below(a: float, sigma: float, l: int) -> float:
    """``(1 - erfc(a / (sqrt 2 sigma)))**l``."""
    return float(math.exp(l * math.log1p(-special.erfc(a / (math.sqrt(2) * sigma)))))


def empirical_sigma_max(a: float, l: int, reps: int, rng: np.random.Generator) -> float:
    """``a / median(max_k |z_k|)`` over ``reps`` sets of ``l`` standard normals."""
    maxima = np.array([np.max(np.abs(rng.standard_normal(l))) for _ in range(reps)])
    return float(a / np.median(maxima))
