"""numba kernels. Must stay numerically equivalent to ``_numpy.py``."""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def chebyshev_order(z):
    az = abs(z)
    return int(az + 12.0 * az ** (1.0 / 3.0) + 20.0)


@njit(cache=True)
def bessel_j_sequence(z, K, out):
    """``out[k] = J_k(z)`` for ``k = 0..K`` by Miller's backward recurrence."""
    for q in range(K + 1):
        out[q] = 0.0
    if z == 0.0:
        out[0] = 1.0
        return
    az = abs(z)
    if az < 1e-8:
        # two-term power series; the recurrence below would overflow 2k/z
        h = 0.5 * z
        term = 1.0
        for q in range(K + 1):
            out[q] = term * (1.0 - h * h / (q + 1))
            term *= h / (q + 1)
            if term == 0.0:
                break
        return
    top = max(float(K), az)
    start = int(top + math.sqrt(160.0 * max(top, 1.0))) + 16
    if start % 2:
        start += 1
    bjp = 0.0
    bj = 1.0
    total = 0.0
    for k in range(start, 0, -1):
        bjm = (2.0 * k / az) * bj - bjp
        bjp = bj
        bj = bjm
        if abs(bj) > 1e200:
            bj *= 1e-200
            bjp *= 1e-200
            total *= 1e-200
            for q in range(K + 1):
                out[q] *= 1e-200
        order = k - 1
        if order <= K:
            out[order] = bj
        if order > 0 and order % 2 == 0:
            total += 2.0 * bj
    total += bj
    for q in range(K + 1):
        out[q] /= total
    if z < 0.0:
        for q in range(1, K + 1, 2):
            out[q] = -out[q]


@njit(cache=True)
def _rotate_row(v, a, J, theta, prev, cur, acc, bess):
    z = theta * J
    if z == 0.0:
        return
    K = chebyshev_order(z)
    bessel_j_sequence(z, K, bess)
    d = v.shape[0]
    inv = 1.0 / J
    # cur = A v / J
    for j in range(d):
        s = 0.0
        if j > 0:
            s += 0.5 * a[j - 1] * v[j - 1]
        if j < d - 1:
            s -= 0.5 * a[j] * v[j + 1]
        cur[j] = s * inv
        prev[j] = v[j]
        acc[j] = bess[0] * v[j] + 2.0 * bess[1] * cur[j]
    for k in range(1, K):
        c = 2.0 * bess[k + 1]
        # prev <- (2A/J) cur + prev, then swap
        for j in range(d):
            s = 0.0
            if j > 0:
                s += a[j - 1] * cur[j - 1]
            if j < d - 1:
                s -= a[j] * cur[j + 1]
            nxt = s * inv + prev[j]
            prev[j] = nxt
            acc[j] += c * nxt
        tmp = prev
        prev = cur
        cur = tmp
    for j in range(d):
        v[j] = acc[j]


@njit(cache=True)
def full_rotate_x(psi, a, theta):
    """In place ``psi[b] <- exp(-i theta[b] J_x) psi[b]`` for real amplitude rows."""
    B, d = psi.shape
    J = 0.5 * (d - 1)
    zmax = 0.0
    for b in range(B):
        zmax = max(zmax, abs(theta[b] * J))
    bess = np.empty(chebyshev_order(zmax) + 2)
    prev = np.empty(d)
    cur = np.empty(d)
    acc = np.empty(d)
    for b in range(B):
        _rotate_row(psi[b], a, J, theta[b], prev, cur, acc, bess)


@njit(cache=True)
def _pick_index(row, u):
    d = row.shape[0]
    total = 0.0
    for j in range(d):
        total += row[j] * row[j]
    thr = u * total
    cum = 0.0
    for j in range(d):
        cum += row[j] * row[j]
        if cum > thr:
            return j
    return d - 1


@njit(cache=True)
def full_weak(psi, m, omega, u, z):
    """Sample homodyne outcomes and apply the Gaussian Kraus reweighting."""
    B, d = psi.shape
    out = np.empty(B)
    sig = math.sqrt(0.5)
    for b in range(B):
        row = psi[b]
        j = _pick_index(row, u[b])
        p = -omega * m[j] + sig * z[b]
        out[b] = p
        if omega == 0.0:
            continue
        emax = -np.inf
        for q in range(d):
            if row[q] != 0.0:
                e = -0.5 * (p + omega * m[q]) ** 2
                if e > emax:
                    emax = e
        norm = 0.0
        for q in range(d):
            row[q] *= math.exp(-0.5 * (p + omega * m[q]) ** 2 - emax)
            norm += row[q] * row[q]
        norm = math.sqrt(norm)
        for q in range(d):
            row[q] /= norm
    return out


@njit(cache=True)
def full_project(psi, m, u):
    B = psi.shape[0]
    out = np.empty(B)
    for b in range(B):
        out[b] = m[_pick_index(psi[b], u[b])]
    return out


@njit(cache=True)
def _g_rot(mu, C, theta):
    c = math.cos(theta)
    s = math.sin(theta)
    y = mu[1]
    zz = mu[2]
    mu[1] = c * y - s * zz
    mu[2] = s * y + c * zz
    cxy = C[0, 1]
    cxz = C[0, 2]
    cyy = C[1, 1]
    cyz = C[1, 2]
    czz = C[2, 2]
    nxy = c * cxy - s * cxz
    nxz = s * cxy + c * cxz
    nyy = c * c * cyy - 2.0 * c * s * cyz + s * s * czz
    nzz = s * s * cyy + 2.0 * c * s * cyz + c * c * czz
    nyz = c * s * (cyy - czz) + (c * c - s * s) * cyz
    C[0, 1] = nxy
    C[1, 0] = nxy
    C[0, 2] = nxz
    C[2, 0] = nxz
    C[1, 1] = nyy
    C[2, 2] = nzz
    C[1, 2] = nyz
    C[2, 1] = nyz


@njit(cache=True)
def _g_weak(mu, C, omega, z):
    S = omega * omega * C[1, 1] + 0.5
    p = -omega * mu[1] + math.sqrt(S) * z
    if omega == 0.0:
        return p
    innov = p + omega * mu[1]
    c0 = C[0, 1]
    c1 = C[1, 1]
    c2 = C[2, 1]
    f = -omega / S
    mu[0] += f * c0 * innov
    mu[1] += f * c1 * innov
    mu[2] += f * c2 * innov
    g = omega * omega / S
    col = (c0, c1, c2)
    for i in range(3):
        for j in range(3):
            C[i, j] -= g * col[i] * col[j]
    # average over the back-action rotation about the meter axis, Var(Pi) = omega^2/2
    v = 0.5 * omega * omega
    e1 = math.exp(-0.5 * v)
    e2 = math.exp(-2.0 * v)
    ec2 = 0.5 * (1.0 + e2)
    es2 = 0.5 * (1.0 - e2)
    mx = mu[0]
    my = mu[1]
    mz = mu[2]
    Mxx = C[0, 0] + mx * mx
    Mzz = C[2, 2] + mz * mz
    Mxz = C[0, 2] + mx * mz
    Mxy = C[0, 1] + mx * my
    Myz = C[1, 2] + my * mz
    mx *= e1
    mz *= e1
    mu[0] = mx
    mu[2] = mz
    C[0, 0] = ec2 * Mxx + es2 * Mzz - mx * mx
    C[2, 2] = ec2 * Mzz + es2 * Mxx - mz * mz
    C[0, 2] = e2 * Mxz - mx * mz
    C[2, 0] = C[0, 2]
    C[0, 1] = e1 * Mxy - mx * my
    C[1, 0] = C[0, 1]
    C[1, 2] = e1 * Myz - my * mz
    C[2, 1] = C[1, 2]
    return p


@njit(cache=True)
def gauss_rotate_x(mu, C, theta):
    for b in range(mu.shape[0]):
        _g_rot(mu[b], C[b], theta[b])


@njit(cache=True)
def gauss_weak(mu, C, omega, z):
    B = mu.shape[0]
    out = np.empty(B)
    for b in range(B):
        out[b] = _g_weak(mu[b], C[b], omega, z[b])
    return out


@njit(cache=True)
def gauss_project(mu, C, z):
    B = mu.shape[0]
    out = np.empty(B)
    for b in range(B):
        out[b] = mu[b, 1] + math.sqrt(max(C[b, 1, 1], 0.0)) * z[b]
    return out


@njit(cache=True)
def gauss_clock_loop(phi0, alpha, corr, mu0, C0, mz0, omegas, betas, z, out_phi, out_est,
                     arcsin_final=False):
    """Closed clock loop over cycles with one Gaussian-branch sequence per cycle.

    ``corr`` is the accumulated phase correction per cycle, ``-alpha * sum(est)``.
    With ``arcsin_final`` the projective stage reads ``arcsin(j3 / mz0)``.
    Returns the correction carried into the next cycle.
    """
    L = phi0.shape[0]
    n = betas.shape[0]
    mu = np.empty(3)
    C = np.empty((3, 3))
    for k in range(L):
        phi = phi0[k] + corr
        for i in range(3):
            mu[i] = mu0[i]
            for j in range(3):
                C[i, j] = C0[i, j]
        _g_rot(mu, C, -phi)
        est = 0.0
        for i in range(n - 1):
            p = _g_weak(mu, C, omegas[i], z[k, i])
            e = -betas[i] * p / (omegas[i] * mz0)
            est += e
            _g_rot(mu, C, e)
        j3 = mu[1] + math.sqrt(max(C[1, 1], 0.0)) * z[k, n - 1]
        r = j3 / mz0
        if arcsin_final:
            r = math.asin(min(max(r, -1.0), 1.0))
        est += betas[n - 1] * r
        out_phi[k] = phi
        out_est[k] = est
        corr -= alpha * est
    return corr
