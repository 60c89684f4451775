"""Numba vs numpy timings for the hot kernels.

Run with ``python benchmarks/bench_kernels.py``. Both backends consume the
same pre-drawn random numbers; the script also reports the largest difference
between their outputs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from squeezeclock.kernels import get_kernels
from squeezeclock.spin import build_squeezed_state, exact_moments, ladder_coefficients, m_values


def best_of(fn, repeat=3):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_full(k, N, B, rng_seed=0):
    rng = np.random.default_rng(rng_seed)
    amp = build_squeezed_state(N, 4.0).amplitudes.real
    a, m = ladder_coefficients(N), m_values(N)
    theta = 0.3 * rng.standard_normal(B)
    u, z = rng.random(B), rng.standard_normal(B)

    def run():
        psi = np.tile(amp, (B, 1))
        k.full_rotate_x(psi, a, -theta)
        p = k.full_weak(psi, m, 10.0 / N, u, z)
        k.full_rotate_x(psi, a, p * 0.01)
        return psi

    return best_of(run)


def bench_gauss(k, N, B, n, rng_seed=0):
    rng = np.random.default_rng(rng_seed)
    mom = exact_moments(build_squeezed_state(N, 4.0))
    theta = 0.3 * rng.standard_normal(B)
    z = rng.standard_normal((B, n))
    omegas = float(N) ** (-1.0 + np.arange(1, n) / (n + 1.0))

    def run():
        mu = np.tile(mom.mean, (B, 1))
        C = np.tile(mom.cov, (B, 1, 1))
        k.gauss_rotate_x(mu, C, -theta)
        for i, om in enumerate(omegas):
            p = k.gauss_weak(mu, C, float(om), np.ascontiguousarray(z[:, i]))
            k.gauss_rotate_x(mu, C, -p / (om * mom.mean_z))
        return mu

    return best_of(run)


def bench_loop(k, N, L, n, rng_seed=0):
    rng = np.random.default_rng(rng_seed)
    mom = exact_moments(build_squeezed_state(N, 4.0))
    free = np.sqrt(0.1) * rng.standard_normal(L)
    z = rng.standard_normal((L, n))
    omegas = float(N) ** (-1.0 + np.arange(1, n) / (n + 1.0))
    betas = np.ones(n)

    def run():
        tp, est = np.empty(L), np.empty(L)
        k.gauss_clock_loop(free, 0.1, 0.0, mom.mean, mom.cov, mom.mean_z, omegas, betas, z, tp, est)
        return est

    return best_of(run)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--quick", action="store_true", help="small sizes")
    args = ap.parse_args(argv)
    nb, npy = get_kernels("numba"), get_kernels("numpy")
    scale = 4 if args.quick else 1
    cases = [
        ("full rotate+weak  N=1000 B=2000", bench_full, (1000, 2000 // scale)),
        ("gauss sequence    N=1e5 B=1e5 n=35", bench_gauss, (10**5, 10**5 // scale, 35)),
        ("clock loop        N=1e5 L=5e3 n=35", bench_loop, (10**5, 5_000 // scale, 35)),
    ]
    print(f"{'case':38s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, fn, size in cases:
        fn(nb, *[max(s // 100, 2) if i == 1 else s for i, s in enumerate(size)])  # compile
        t_nb, out_nb = fn(nb, *size)
        t_np, out_np = fn(npy, *size)
        diff = float(np.max(np.abs(out_nb - out_np)))
        print(f"{name:38s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
