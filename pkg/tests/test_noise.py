import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from squeezeclock.noise import (
    LOTrace,
    NoiseModel,
    Spectrum,
    average_spectra,
    gen_pink_trace,
    gen_white_trace,
    loglog_slope,
    periodogram,
)


def test_white_variance_band():
    tr = gen_white_trace(0.1, 10**6, np.random.default_rng(11))
    assert len(tr) == 10**6
    assert 0.0994 <= tr.increments.var() <= 0.1006
    assert abs(tr.increments.mean()) < 5 * np.sqrt(0.1 / 1e6)


def test_white_vanishing_noise():
    tr = gen_white_trace(1e-12, 10**4, np.random.default_rng(0))
    assert np.max(np.abs(tr.increments)) < 1e-5


@pytest.mark.parametrize("kind", ["white", "pink"])
def test_seed_determinism(kind):
    m = NoiseModel(kind)
    a = m.generate(0.1, 4096, np.random.default_rng(5)).increments
    b = m.generate(0.1, 4096, np.random.default_rng(5)).increments
    c = m.generate(0.1, 4096, np.random.default_rng(6)).increments
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_white_autocorrelation():
    l = 2**16
    x = gen_white_trace(0.3, l, np.random.default_rng(8)).increments
    x = x - x.mean()
    for lag in range(1, 11):
        rho = np.dot(x[:-lag], x[lag:]) / np.dot(x, x)
        assert abs(rho) < 4 / np.sqrt(l)


def test_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        gen_white_trace(0.0, 10, rng)
    with pytest.raises(ValueError):
        gen_white_trace(0.1, 0, rng)
    with pytest.raises(ValueError):
        NoiseModel("brown")
    with pytest.raises(ValueError):
        NoiseModel("pink", gamma=-1.0)
    with pytest.raises(ValueError):
        NoiseModel("pink", decades_below=1)
    with pytest.raises(ValueError, match="cannot synthesise"):
        gen_pink_trace(0.1, 2**22, 8, rng)
    with pytest.raises(ValueError):
        LOTrace([0.0, np.nan], 0.1)
    with pytest.raises(ValueError):
        periodogram(np.zeros(15))


def test_pink_zero_gamma_is_zero():
    tr = gen_pink_trace(0.0, 1024, 4, np.random.default_rng(0))
    assert np.array_equal(tr.increments, np.zeros(1024))


@pytest.fixture(scope="module")
def pink_ensemble():
    l = 2**14
    traces = [gen_pink_trace(0.1, l, 4, np.random.default_rng(1000 + s)).increments for s in range(100)]
    return np.array(traces)


def test_pink_slope(pink_ensemble):
    sp = average_spectra(periodogram(x) for x in pink_ensemble)
    # central two decades of [1/l, 1/2]
    lo = np.sqrt(sp.frequency[1] * 0.5) / 10
    slope, se = loglog_slope(sp.frequency, sp.power, lo, 100 * lo)
    assert abs(slope + 1.0) < 0.1


def test_pink_lag1_correlation(pink_ensemble):
    x = pink_ensemble - pink_ensemble.mean(axis=1, keepdims=True)
    rho = np.sum(x[:, :-1] * x[:, 1:], axis=1) / np.sum(x * x, axis=1)
    assert rho.mean() > 5 * rho.std(ddof=1) / np.sqrt(len(rho))


def test_pink_cutoff_raises_low_frequency_power():
    # more decades below the band add variance from slow drifts
    v = {d: np.mean([gen_pink_trace(0.1, 2**10, d, np.random.default_rng(s)).increments.var()
                     for s in range(40)]) for d in (2, 6)}
    assert v[6] > v[2]


def test_white_plateau():
    l = 4096
    rng = np.random.default_rng(3)
    sp = average_spectra(periodogram(rng.standard_normal(l)) for _ in range(200))
    level = sp.power[1:].mean()
    assert abs(level - 1.0) < 0.05
    sp_T = periodogram(np.sqrt(2.0 / 0.5) * rng.standard_normal(l), T=0.5)
    assert abs(sp_T.power[1:].mean() - 2.0) < 0.2


def test_zero_input_zero_spectrum():
    sp = periodogram(np.zeros(64))
    assert np.all(sp.power == 0)
    assert sp.frequency[0] == 0 and sp.frequency[-1] == 0.5


@given(arrays(float, st.integers(16, 300), elements=st.floats(-1e3, 1e3)),
       st.floats(0.01, 100.0))
def test_parseval(x, T):
    sp = periodogram(x, T)
    ms = np.mean(x**2)
    assert sp.integral() == pytest.approx(ms, rel=5e-3, abs=1e-12)


def test_band_helpers():
    f = np.fft.rfftfreq(1000)
    sp = Spectrum(f, np.ones_like(f), 1000, 1.0)
    mean, se, k = sp.lowest_decade()
    assert (mean, k) == (1.0, 9)
    mean, se, k = sp.highest_decade()
    assert mean == 1.0 and k == 451
    with pytest.raises(ValueError):
        sp.band_mean(2.0, 3.0)
    with pytest.raises(ValueError):
        average_spectra([sp, Spectrum(f[:10], f[:10], 18, 1.0)])


def test_csv_export(tmp_path):
    tr = gen_white_trace(0.1, 20, np.random.default_rng(0))
    tr.to_csv(tmp_path / "t.csv")
    rows = [r for r in csv.reader(open(tmp_path / "t.csv")) if r and not r[0].startswith("#")]
    assert rows[0] == ["index", "value"]
    np.testing.assert_allclose([float(r[1]) for r in rows[1:]], tr.increments, rtol=1e-15)
    sp = periodogram(tr.increments)
    sp.to_csv(tmp_path / "s.csv")
    rows = [r for r in csv.reader(open(tmp_path / "s.csv")) if r and not r[0].startswith("#")]
    assert rows[0] == ["frequency", "S"] and len(rows) == 12
