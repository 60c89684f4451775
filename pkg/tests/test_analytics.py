import csv
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize

from squeezeclock.analytics import (
    AtomicSurrogate,
    QuadratureError,
    analytic_report,
    backaction_terms,
    closed_form_u_moment,
    empirical_sigma_max,
    gauss_expect,
    jz_noise_terms,
    n_max,
    phase_factors,
    prob_all_below,
    probe_noise_terms,
    reference_limits,
    sigma_max,
    stability_upper_bound,
)
from squeezeclock.protocol import default_schedule, simulate_sequences
from squeezeclock.spin import build_squeezed_state, exact_moments, gaussian_moments, operator_matrices

# ---------------------------------------------------------------- J_z terms


def test_coherent_state_jz_terms_vanish():
    N = 10**4
    s = default_schedule(N)
    assert max(jz_noise_terms(N, math.sqrt(N), s.n, 0.1)) < 1e-8


def test_first_term_linear_in_gammaT():
    t1 = jz_noise_terms(1000, 3.0, 5, 0.05)[0]
    t2 = jz_noise_terms(1000, 3.0, 5, 0.10)[0]
    assert t2 == pytest.approx(2 * t1, rel=1e-12)


def test_surrogate_with_exact_moments():
    N, kappa, n = 100, 4.0, 10
    mom = exact_moments(build_squeezed_state(N, kappa))
    a = jz_noise_terms(N, kappa, n, 0.1)
    b = jz_noise_terms(N, kappa, n, 0.1, moments=mom)
    np.testing.assert_allclose(a, b, rtol=0.02)


def test_surrogate_exact_at_second_order():
    # E[u^2] is a pure second moment, so the surrogate agrees with the true J_z distribution
    N, kappa = 100, 4.0
    st0 = build_squeezed_state(N, kappa)
    w, V = np.linalg.eigh(operator_matrices(N)[2])
    p = np.abs(V.conj().T @ st0.amplitudes) ** 2
    u = 1 - w / (p @ w)
    a1 = phase_factors(0.1)[0]
    assert jz_noise_terms(N, kappa, 1, 0.1, moments=exact_moments(st0))[0] == pytest.approx(a1 * p @ u**2, rel=1e-9)


@given(su=st.floats(1e-3, 0.5), p=st.integers(0, 30), q=st.integers(0, 3))
def test_quadrature_matches_closed_form(su, p, q):
    mom = gaussian_moments(1000, 3.0)
    atoms = AtomicSurrogate(mom)
    atoms.su = su
    ref = closed_form_u_moment(su, p, q)
    scale = math.sqrt(closed_form_u_moment(su, 2 * p, 2 * q))  # Cauchy-Schwarz bound on |E|
    assert atoms.u_moment(p, q) == pytest.approx(ref, rel=1e-9, abs=1e-13 * scale)


def test_phase_factors():
    g = 0.2
    a1, a2, a3, s2 = phase_factors(g)
    assert a1 == pytest.approx(g, rel=1e-12)
    assert s2 == pytest.approx((1 - math.exp(-2 * g)) / 2, rel=1e-12)
    assert a2 < 0 < a3
    with pytest.raises(ValueError):
        phase_factors(0.0)
    with pytest.raises(QuadratureError):
        gauss_expect(lambda x: np.full_like(x, np.inf), 1.0)


def test_jz_terms_decrease_up_to_n_max():
    N, kappa, g = 1000, 3.0, 0.1
    k = n_max(N, kappa, g)
    t = np.array([jz_noise_terms(N, kappa, n, g) for n in range(1, k + 1)])
    assert np.all(np.diff(t[:, 0]) <= 0)
    assert np.all(np.diff(t[:, 2]) <= 0)
    assert jz_noise_terms(N, kappa, k + 3, g)[2] > t[-1, 2]


def _brute_n_max(N, kappa, n_hi):
    # arbitrary precision: su**k underflows double precision for the larger n
    su = mpmath.mpf(AtomicSurrogate(gaussian_moments(N, kappa)).su)

    def term3(k):  # E[u^k (1-u)^2] for even k
        return (mpmath.fac2(k - 1) if k else 1) * su**k + mpmath.fac2(k + 1) * su ** (k + 2)

    vals = [term3(2 * n - 2) for n in range(1, n_hi)]
    return int(np.argmin(vals)) + 1


def test_n_max_matches_brute_force():
    for kappa in (1.5, 2.0, 3.0, 5.0):
        assert n_max(1000, kappa) == _brute_n_max(1000, kappa, 1000)
    # frozen from the same arbitrary-precision scan
    assert [n_max(1000, k) for k in (2, 3, 5, 8)] == [16, 81, 626, 4130]
    assert n_max(1000, 8.0, n_limit=100) == 100


def test_n_max_non_decreasing_in_kappa():
    ks = np.linspace(1.0, math.sqrt(1000), 200)
    vals = [n_max(1000, k) for k in ks]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------- back-action and probe terms


def test_backaction_zero_strength():
    assert np.all(backaction_terms(1000, 3.0, 6, np.zeros(5), 0.1) == 0)


@pytest.mark.parametrize("kind", ["backaction", "probe"])
def test_large_N_default_terms_below_inverse_N2(kind):
    N = 10**6
    s = default_schedule(N)
    if kind == "backaction":
        t = backaction_terms(N, s.kappa, s.n, s.omegas, 0.3)
    else:
        t = probe_noise_terms(N, s.kappa, s.n, s.omegas)
    assert np.all(t >= 0) and np.all(t <= 5 / N**2)


def _surrogate_samples(N, kappa, size, rng):
    mom = gaussian_moments(N, kappa)
    atoms = AtomicSurrogate(mom)
    u = atoms.su * rng.standard_normal(size)
    x = math.sqrt(atoms.sx2) * rng.standard_normal(size)
    return mom, u, x


def test_backaction_stage2_monte_carlo():
    N, kappa, n, g = 100, 4.0, 5, 0.1
    om = np.array([0.02, 0.05, 0.1, 0.3])
    rng = np.random.default_rng(0)
    mom, u, x = _surrogate_samples(N, kappa, 10**6, rng)
    phi = math.sqrt(g) * rng.standard_normal(10**6)
    mc = np.mean(0.5 * om[1] ** 2 * (np.sin(phi) - phi) ** 2 * u**2 * (1 - u) ** 2 * x**2)
    assert backaction_terms(N, kappa, n, om, g)[1] == pytest.approx(mc, rel=0.05)
    mc1 = np.mean(0.5 * om[0] ** 2 * np.sin(phi) ** 2 * u**2 * x**2)
    assert backaction_terms(N, kappa, n, om, g)[0] == pytest.approx(mc1, rel=0.05)


def test_probe_stage1_monte_carlo():
    N, kappa, n = 100, 4.0, 5
    om = np.array([0.02, 0.05, 0.1, 0.3])
    rng = np.random.default_rng(1)
    mom, u, _ = _surrogate_samples(N, kappa, 10**6, rng)
    P = math.sqrt(0.5) * rng.standard_normal(10**6)
    mc = np.mean(u**8 * P**2) / (mom.mean_z**2 * om[0] ** 2)
    assert probe_noise_terms(N, kappa, n, om)[0] == pytest.approx(mc, rel=0.05)


def test_probe_decreases_with_strength():
    oms = np.geomspace(1e-3, 1e3, 13)
    vals = [probe_noise_terms(1000, 3.0, 2, [o])[0] for o in oms]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-6 / gaussian_moments(1000, 3.0).mean_z ** 2


def test_term_validation():
    with pytest.raises(ValueError):
        probe_noise_terms(1000, 3.0, 3, [0.1, 0.0])
    with pytest.raises(ValueError):
        backaction_terms(1000, 3.0, 3, [0.1], 0.1)
    with pytest.raises(ValueError):
        backaction_terms(1000, 3.0, 2, [-0.1], 0.1)
    with pytest.raises(ValueError):
        jz_noise_terms(1000, 3.0, 0, 0.1)


def test_terms_nonnegative_and_continuous_in_kappa():
    N = 1000
    s = default_schedule(N)

    def terms(k):
        r = analytic_report(N, k, s.n, s.omegas, 0.1)
        return np.array([*r.jz_terms, *r.backaction_terms, *r.probe_terms, r.jy_floor])

    for k in np.geomspace(1.0, math.sqrt(N), 120):
        a, b = terms(k), terms(k * (1 + 1e-6))
        assert np.all(np.isfinite(a)) and np.all(a >= 0)
        big = a > 1e-280
        np.testing.assert_allclose(b[big], a[big], rtol=1e-2)


def test_report_csv(tmp_path):
    s = default_schedule(100)
    r = analytic_report(100, s.kappa, s.n, s.omegas, 0.1)
    assert r.total >= r.max_term() > 0
    r.to_csv(tmp_path / "r.csv")
    rows = [x for x in csv.reader(open(tmp_path / "r.csv")) if x and not x[0].startswith("#")]
    assert rows[0] == ["term", "stage", "value"]
    assert len(rows) == 1 + 3 + 2 * (s.n - 1) + 2
    assert float(rows[-1][2]) == pytest.approx(r.total)


def _calibrated_ms(N, g):
    s = default_schedule(N)
    phi = math.sqrt(g) * np.random.default_rng(0).standard_normal(10**5)
    out = simulate_sequences(N, s, phi, "gaussian", np.random.default_rng(1), calibrate=True)
    sq = out.residual**2
    return analytic_report(N, s.kappa, s.n, s.omegas, g).total, sq.mean(), sq.std() / math.sqrt(sq.size)


@pytest.mark.xfail(strict=True, reason="calibrated Monte Carlo exceeds the dominant-term total by 1-5%")
@pytest.mark.parametrize("N", [100, 1000])
def test_analytic_total_bounds_monte_carlo(N):
    total, ms, se = _calibrated_ms(N, 0.1)
    assert total >= ms - 3 * se


@pytest.mark.parametrize("N", [100, 1000])
def test_analytic_total_tracks_monte_carlo(N):
    total, ms, se = _calibrated_ms(N, 0.1)
    assert total == pytest.approx(ms, rel=0.10)


# ---------------------------------------------------------------- bounds and limits


def test_upper_bound_values():
    assert stability_upper_bound(10**4, 0.3) == pytest.approx(1.206e-3, rel=1e-3)
    N = 10**6
    ratio = stability_upper_bound(N, 0.2) / reference_limits(N, 0.2)[1]
    assert ratio == pytest.approx(2 + math.log(1e3), rel=1e-12)
    assert 2 + math.log10(math.sqrt(N)) == pytest.approx(5.0)
    r = [stability_upper_bound(n, 1.0) * n for n in (1e4, 1e8, 1e12)]
    assert np.allclose(np.diff(r), math.log(100), rtol=1e-9)
    with pytest.raises(ValueError):
        stability_upper_bound(99, 0.1)


def test_reference_limits():
    sql, h, andre = reference_limits(1, 0.3)
    assert sql == h
    assert reference_limits(10**5, 0.3)[1] == pytest.approx(1.83e-5, rel=5e-3)
    for N in np.geomspace(2, 1e9, 50):
        sql, h, andre = reference_limits(N, 0.1)
        assert h < andre < sql
    with pytest.raises(ValueError):
        reference_limits(0.5, 0.1)


@pytest.mark.parametrize("l", [10**3, 10**4, 10**6])
def test_sigma_max_round_trip(l):
    s = sigma_max(math.pi, l)
    assert prob_all_below(math.pi, s, l) == pytest.approx(0.5, abs=0.05)


def test_sigma_max_monotone_and_errors():
    assert sigma_max(1.0, 10**6) < sigma_max(1.0, 10**4)
    with pytest.raises(ValueError):
        sigma_max(1.0, 5)
    with pytest.raises(ValueError):
        sigma_max(0.0, 100)


@pytest.mark.parametrize("l", [10**3, 10**4, 10**6])
def test_transition_width(l):
    a = math.pi
    lo = optimize.brentq(lambda s: prob_all_below(a, s, l) - 0.95, 1e-3, 10)
    hi = optimize.brentq(lambda s: prob_all_below(a, s, l) - 0.05, 1e-3, 10)
    assert lo < sigma_max(a, l) < hi
    assert hi - lo == pytest.approx(2 * sigma_max(a, l) / math.log(l), rel=0.1)


def test_empirical_sigma_max():
    emp = empirical_sigma_max(math.pi, 10**4, 400, np.random.default_rng(0))
    assert emp == pytest.approx(sigma_max(math.pi, 10**4), rel=0.03)
