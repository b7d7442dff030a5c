"""Explicit-loop versions of the hot kernels.

These are written for ``numba.njit``; the package compiles them in
:mod:`torus_bnf.kernels` and never calls them uncompiled in production.
"""

import numpy as np


def poly_value(slots, coef, z):
    acc = 0j
    for n in range(slots.shape[0]):
        m = coef[n]
        for k in range(slots.shape[1]):
            m *= z[slots[n, k]]
        acc += m
    return acc


def _accumulate_gradient(slots, coef, z, out):
    L = slots.shape[1]
    for n in range(slots.shape[0]):
        for k in range(L):
            m = coef[n]
            for i in range(L):
                if i != k:
                    m *= z[slots[n, i]]
            out[slots[n, k]] += m


def poly_gradient(slots, coef, z):
    out = np.zeros(z.shape[0], dtype=np.complex128)
    _accumulate_gradient(slots, coef, z, out)
    return out


def _xi_rate(xi, slots, coef, ext, grad, out, sign):
    n = xi.shape[0]
    for i in range(n):
        ext[i] = xi[i]
        ext[n + i] = np.conj(xi[i])
    ext[2 * n] = 1.0
    for i in range(grad.shape[0]):
        grad[i] = 0.0
    _accumulate_gradient(slots, coef, ext, grad)
    for i in range(n):
        out[i] = -1j * sign * grad[n + i]


def rk4_flow(xi, slots, coef, h, nsteps, sign):
    n = xi.shape[0]
    ext = np.empty(2 * n + 1, dtype=np.complex128)
    grad = np.empty(2 * n + 1, dtype=np.complex128)
    k1 = np.empty(n, dtype=np.complex128)
    k2 = np.empty(n, dtype=np.complex128)
    k3 = np.empty(n, dtype=np.complex128)
    k4 = np.empty(n, dtype=np.complex128)
    tmp = np.empty(n, dtype=np.complex128)
    y = xi.copy()
    for _ in range(nsteps):
        _xi_rate(y, slots, coef, ext, grad, k1, sign)
        for i in range(n):
            tmp[i] = y[i] + 0.5 * h * k1[i]
        _xi_rate(tmp, slots, coef, ext, grad, k2, sign)
        for i in range(n):
            tmp[i] = y[i] + 0.5 * h * k2[i]
        _xi_rate(tmp, slots, coef, ext, grad, k3, sign)
        for i in range(n):
            tmp[i] = y[i] + h * k3[i]
        _xi_rate(tmp, slots, coef, ext, grad, k4, sign)
        for i in range(n):
            y[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return y


def split_steps(xi, omega, slots, coef, dt, weights, nsteps):
    n = xi.shape[0]
    nw = weights.shape[0]
    rot = np.empty((nw, n), dtype=np.complex128)
    for k in range(nw):
        for i in range(n):
            rot[k, i] = np.exp(-0.5j * weights[k] * dt * omega[i])
    y = xi.copy()
    for _ in range(nsteps):
        for k in range(nw):
            for i in range(n):
                y[i] *= rot[k, i]
            if slots.shape[0] > 0:
                y = rk4_flow(y, slots, coef, weights[k] * dt, 1, 1.0)
            for i in range(n):
                y[i] *= rot[k, i]
    return y


def min_log_margin(slots, signs, log_thr, group, n_groups, omega):
    S = omega.shape[0]
    out = np.full((S, n_groups), np.inf)
    for s in range(S):
        for t in range(slots.shape[0]):
            acc = 0.0
            for k in range(slots.shape[1]):
                acc += signs[t, k] * omega[s, slots[t, k]]
            acc = abs(acc)
            if acc == 0.0:
                m = -np.inf
            else:
                m = np.log(acc) - log_thr[t]
            g = group[t]
            if m < out[s, g]:
                out[s, g] = m
    return out
