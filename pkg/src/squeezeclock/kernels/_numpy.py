"""Vectorised pure-numpy kernels, selected with ``SQUEEZECLOCK_BACKEND=numpy``.

Same signatures and in-place semantics as the numba versions. Batches are
vectorised across rows; the clock loop is necessarily a Python loop over cycles.
"""

import numpy as np
from scipy import special


def chebyshev_order(z):
    az = abs(z)
    return int(az + 12.0 * az ** (1.0 / 3.0) + 20.0)


def bessel_j_sequence(z, K, out):
    out[: K + 1] = special.jv(np.arange(K + 1), z)


def _apply_a(q, a):
    # (A q)_j = a_{j-1} q_{j-1} / 2 - a_j q_{j+1} / 2, A = -i J_x
    out = np.zeros_like(q)
    out[:, 1:] += 0.5 * a * q[:, :-1]
    out[:, :-1] -= 0.5 * a * q[:, 1:]
    return out


def full_rotate_x(psi, a, theta):
    B, d = psi.shape
    J = 0.5 * (d - 1)
    z = np.asarray(theta, dtype=float) * J
    active = z != 0.0
    if not active.any():
        return
    v = psi[active]
    z = z[active]
    K = chebyshev_order(np.max(np.abs(z)))
    coef = special.jv(np.arange(K + 1)[:, None], z[None, :])
    prev = v
    cur = _apply_a(v, a) / J
    acc = coef[0][:, None] * v + 2.0 * coef[1][:, None] * cur
    for k in range(1, K):
        nxt = 2.0 * _apply_a(cur, a) / J + prev
        acc += 2.0 * coef[k + 1][:, None] * nxt
        prev, cur = cur, nxt
    psi[active] = acc


def _pick_index(psi, u):
    cum = np.cumsum(psi * psi, axis=1)
    thr = np.asarray(u) * cum[:, -1]
    idx = np.sum(cum <= thr[:, None], axis=1)
    return np.minimum(idx, psi.shape[1] - 1)


def full_weak(psi, m, omega, u, z):
    j = _pick_index(psi, u)
    p = -omega * m[j] + np.sqrt(0.5) * np.asarray(z)
    if omega == 0.0:
        return p
    expo = -0.5 * (p[:, None] + omega * m[None, :]) ** 2
    emax = np.max(np.where(psi != 0.0, expo, -np.inf), axis=1, keepdims=True)
    psi *= np.exp(expo - emax)
    psi /= np.linalg.norm(psi, axis=1, keepdims=True)
    return p


def full_project(psi, m, u):
    return m[_pick_index(psi, u)]


def gauss_rotate_x(mu, C, theta):
    c = np.cos(theta)
    s = np.sin(theta)
    y = mu[:, 1].copy()
    zz = mu[:, 2].copy()
    mu[:, 1] = c * y - s * zz
    mu[:, 2] = s * y + c * zz
    cxy = C[:, 0, 1].copy()
    cxz = C[:, 0, 2].copy()
    cyy = C[:, 1, 1].copy()
    cyz = C[:, 1, 2].copy()
    czz = C[:, 2, 2].copy()
    nxy = c * cxy - s * cxz
    nxz = s * cxy + c * cxz
    C[:, 0, 1] = C[:, 1, 0] = nxy
    C[:, 0, 2] = C[:, 2, 0] = nxz
    C[:, 1, 1] = c * c * cyy - 2.0 * c * s * cyz + s * s * czz
    C[:, 2, 2] = s * s * cyy + 2.0 * c * s * cyz + c * c * czz
    C[:, 1, 2] = C[:, 2, 1] = c * s * (cyy - czz) + (c * c - s * s) * cyz


def gauss_weak(mu, C, omega, z):
    S = omega * omega * C[:, 1, 1] + 0.5
    p = -omega * mu[:, 1] + np.sqrt(S) * np.asarray(z)
    if omega == 0.0:
        return p
    innov = p + omega * mu[:, 1]
    col = C[:, :, 1].copy()
    mu += (-omega / S * innov)[:, None] * col
    C -= (omega * omega / S)[:, None, None] * col[:, :, None] * col[:, None, :]
    v = 0.5 * omega * omega
    e1 = np.exp(-0.5 * v)
    e2 = np.exp(-2.0 * v)
    ec2 = 0.5 * (1.0 + e2)
    es2 = 0.5 * (1.0 - e2)
    mx, my, mz = mu[:, 0].copy(), mu[:, 1].copy(), mu[:, 2].copy()
    Mxx = C[:, 0, 0] + mx * mx
    Mzz = C[:, 2, 2] + mz * mz
    Mxz = C[:, 0, 2] + mx * mz
    Mxy = C[:, 0, 1] + mx * my
    Myz = C[:, 1, 2] + my * mz
    mx = mx * e1
    mz = mz * e1
    mu[:, 0] = mx
    mu[:, 2] = mz
    C[:, 0, 0] = ec2 * Mxx + es2 * Mzz - mx * mx
    C[:, 2, 2] = ec2 * Mzz + es2 * Mxx - mz * mz
    C[:, 0, 2] = C[:, 2, 0] = e2 * Mxz - mx * mz
    C[:, 0, 1] = C[:, 1, 0] = e1 * Mxy - mx * my
    C[:, 1, 2] = C[:, 2, 1] = e1 * Myz - my * mz
    return p


def gauss_project(mu, C, z):
    return mu[:, 1] + np.sqrt(np.maximum(C[:, 1, 1], 0.0)) * np.asarray(z)


def gauss_clock_loop(phi0, alpha, corr, mu0, C0, mz0, omegas, betas, z, out_phi, out_est,
                     arcsin_final=False):
    n = len(betas)
    for k in range(len(phi0)):
        phi = phi0[k] + corr
        mu = mu0[None, :].copy()
        C = C0[None, :, :].copy()
        gauss_rotate_x(mu, C, np.array([-phi]))
        est = 0.0
        for i in range(n - 1):
            p = gauss_weak(mu, C, omegas[i], z[k, i : i + 1])[0]
            e = -betas[i] * p / (omegas[i] * mz0)
            est += e
            gauss_rotate_x(mu, C, np.array([e]))
        r = gauss_project(mu, C, z[k, n - 1 : n])[0] / mz0
        if arcsin_final:
            r = np.arcsin(np.clip(r, -1.0, 1.0))
        est += betas[n - 1] * r
        out_phi[k] = phi
        out_est[k] = est
        corr -= alpha * est
    return corr
