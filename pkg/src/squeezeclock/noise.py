"""Free-running local-oscillator noise and spectral estimates.

Time is measured in units of the Ramsey time ``T``, so traces depend on
``gamma`` and ``T`` only through ``gammaT``. Frequency noise spectra are
two-sided densities, ``<w(f) w(f')> = delta(f + f') S(f)``:

* white: ``S(f) = gamma``, giving per-cycle phase variance ``gamma T``;
* pink: ``S(f) = gamma**2 / |f|`` between ``f_min`` and ``1/(2T)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from ._io import write_csv

NoiseKind = Literal["white", "pink"]

#: sub-samples of the synthesis grid per Ramsey window
PINK_SUBSAMPLES = 8
#: largest synthesis grid accepted by :func:`gen_pink_trace`
PINK_MAX_SAMPLES = 2**27


@dataclass(frozen=True)
class NoiseModel:
    kind: NoiseKind = "white"
    gamma: float = 1.0
    decades_below: int = 4

    def __post_init__(self):
        if self.kind not in ("white", "pink"):
            raise ValueError(f"noise kind must be 'white' or 'pink', got {self.kind!r}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if int(self.decades_below) != self.decades_below or self.decades_below < 2:
            raise ValueError(f"decades_below must be an integer >= 2, got {self.decades_below}")

    def generate(self, gammaT: float, l: int, rng: np.random.Generator) -> "LOTrace":
        if self.kind == "white":
            return gen_white_trace(gammaT, l, rng)
        return gen_pink_trace(gammaT, l, self.decades_below, rng)


@dataclass(frozen=True)
class LOTrace:
    """Per-cycle free-running phase increments ``dphi0(t_k)``, ``k = 1..l``."""

    increments: np.ndarray
    gammaT: float
    ramsey_time: float = 1.0
    model: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        inc = np.array(self.increments, dtype=float)
        if inc.ndim != 1 or not np.all(np.isfinite(inc)):
            raise ValueError("increments must be a finite 1-D sequence")
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def cycle_count(self) -> int:
        return len(self.increments)

    def __len__(self) -> int:
        return self.cycle_count

    def frequency(self) -> np.ndarray:
        """Mean frequency offset over each window, ``dphi0 / T``."""
        return self.increments / self.ramsey_time

    def to_csv(self, path) -> None:
        write_csv(
            path,
            ["index", "value"],
            zip(range(1, self.cycle_count + 1), self.increments),
            meta={"kind": self.model.kind, "gammaT": self.gammaT, "T": self.ramsey_time},
        )


def _check_l(l: int) -> int:
    if int(l) != l or l < 1:
        raise ValueError(f"cycle count must be a positive integer, got {l}")
    return int(l)


def gen_white_trace(gammaT: float, l: int, rng: np.random.Generator) -> LOTrace:
    """I.i.d. ``N(0, gammaT)`` phase increments."""
    if not gammaT > 0:
        raise ValueError(f"gammaT must be positive, got {gammaT}")
    l = _check_l(l)
    inc = np.sqrt(gammaT) * rng.standard_normal(l)
    return LOTrace(inc, gammaT, model=NoiseModel("white"))


def gen_pink_trace(
    gammaT: float,
    l: int,
    decades_below: int = 4,
    rng: np.random.Generator | None = None,
    subsamples: int = PINK_SUBSAMPLES,
) -> LOTrace:
    """1/f frequency noise integrated over consecutive Ramsey windows.

    A record ``2**decades_below`` times longer than requested is synthesised by
    spectral shaping on a grid with ``subsamples`` points per window; the
    spectrum is ``(gammaT)**2 / |f|`` (dimensionless frequency ``fT``) between
    the record's lowest Fourier bin and ``1/2``, zero elsewhere. The leading
    windows are discarded as warm-up.
    """
    if not gammaT >= 0 or not np.isfinite(gammaT):
        raise ValueError(f"gammaT must be non-negative, got {gammaT}")
    l = _check_l(l)
    if int(decades_below) != decades_below or decades_below < 2:
        raise ValueError(f"decades_below must be an integer >= 2, got {decades_below}")
    if subsamples < 8:
        raise ValueError("at least 8 sub-samples per Ramsey window are required")
    if rng is None:
        raise ValueError("an explicit random generator is required")
    windows = l * 2**decades_below
    M = windows * subsamples
    if l < 2 or M > PINK_MAX_SAMPLES:
        raise ValueError(
            f"cannot synthesise l={l} with decades_below={decades_below}: "
            f"needs l >= 2 and at most {PINK_MAX_SAMPLES} grid points, got {M}"
        )
    model = NoiseModel("pink", decades_below=int(decades_below))
    if gammaT == 0:
        return LOTrace(np.zeros(l), 0.0, model=model)
    dt = 1.0 / subsamples
    f = np.fft.rfftfreq(M, dt)
    band = (f > 0) & (f <= 0.5)
    S = np.zeros_like(f)
    S[band] = gammaT**2 / f[band]
    # E|X_k|^2 = M S(f_k) / dt for the unnormalised DFT
    amp = np.sqrt(M * S / dt / 2.0)
    X = amp * (rng.standard_normal(len(f)) + 1j * rng.standard_normal(len(f)))
    x = np.fft.irfft(X, n=M)
    inc = x.reshape(windows, subsamples).sum(axis=1) * dt
    return LOTrace(inc[-l:], gammaT, model=model)


@dataclass(frozen=True)
class Spectrum:
    """Periodogram on ``f_k = k / (n T)``, ``k = 0 .. n//2``."""

    frequency: np.ndarray
    power: np.ndarray
    n: int
    T: float

    def integral(self) -> float:
        """Integral over the symmetric frequency axis; equals the mean square."""
        w = np.full(len(self.power), 2.0)
        w[0] = 1.0
        if self.n % 2 == 0:
            w[-1] = 1.0
        return float(np.sum(w * self.power) / (self.n * self.T))

    def band_mean(self, f_lo: float, f_hi: float) -> tuple[float, float, int]:
        """Mean power in ``[f_lo, f_hi)`` with its standard error and bin count."""
        sel = (self.frequency >= f_lo) & (self.frequency < f_hi) & (self.frequency > 0)
        vals = self.power[sel]
        if vals.size == 0:
            raise ValueError("no frequency bins in the requested band")
        se = vals.std(ddof=1) / np.sqrt(vals.size) if vals.size > 1 else np.nan
        return float(vals.mean()), float(se), int(vals.size)

    def lowest_decade(self) -> tuple[float, float, int]:
        """``band_mean`` over ``[f_1, 10 f_1)`` with ``f_1`` the first nonzero bin."""
        f1 = self.frequency[1]
        return self.band_mean(f1, 10 * f1)

    def highest_decade(self) -> tuple[float, float, int]:
        """``band_mean`` over the top decade up to the Nyquist bin (inclusive)."""
        top = self.frequency[-1]
        return self.band_mean(top / 10, np.nextafter(top, np.inf))

    def to_csv(self, path, meta=None) -> None:
        write_csv(path, ["frequency", "S"], zip(self.frequency, self.power), meta=meta)


def average_spectra(spectra) -> Spectrum:
    """Bin-wise mean of periodograms taken on the same frequency grid."""
    spectra = list(spectra)
    if not spectra:
        raise ValueError("need at least one spectrum")
    first = spectra[0]
    for sp in spectra[1:]:
        if sp.n != first.n or sp.T != first.T:
            raise ValueError("spectra must share length and sampling interval")
    power = np.mean([sp.power for sp in spectra], axis=0)
    return Spectrum(first.frequency.copy(), power, first.n, first.T)


def periodogram(series, T: float = 1.0) -> Spectrum:
    """Power spectral density ``S(f_k) = (T/n) |X_k|^2`` of a per-cycle series.

    Listed for ``f >= 0`` only, with the two-sided density normalisation: white
    frequency noise of per-cycle variance ``gamma/T`` gives a plateau at
    ``gamma``.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 16:
        raise ValueError(f"periodogram needs a 1-D series of length >= 16, got {x.shape}")
    if not T > 0:
        raise ValueError("T must be positive")
    n = x.size
    X = np.fft.rfft(x)
    return Spectrum(np.fft.rfftfreq(n, T), (T / n) * np.abs(X) ** 2, n, float(T))


def loglog_slope(freq, power, f_lo: float, f_hi: float) -> tuple[float, float]:
    """Least-squares slope of ``log S`` against ``log f`` on ``[f_lo, f_hi]``.

    Returns ``(slope, standard error)``.
    """
    freq = np.asarray(freq)
    power = np.asarray(power)
    sel = (freq >= f_lo) & (freq <= f_hi) & (power > 0)
    lx, ly = np.log(freq[sel]), np.log(power[sel])
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    dof = max(len(lx) - 2, 1)
    s2 = float(np.sum((ly - A @ coef) ** 2)) / dof
    se = np.sqrt(s2 / np.sum((lx - lx.mean()) ** 2))
    return float(coef[0]), float(se)
