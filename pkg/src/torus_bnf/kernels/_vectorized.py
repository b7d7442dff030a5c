"""Pure-numpy implementations of the hot kernels (the fallback backend)."""

from __future__ import annotations

import numpy as np


def poly_value(slots, coef, z):
    if slots.shape[0] == 0:
        return 0j
    return np.dot(np.prod(z[slots], axis=1), coef)


def _others_product(vals):
    """Product of each row with column k left out, for every k (no division)."""
    n, L = vals.shape
    prefix = np.ones((n, L + 1), dtype=vals.dtype)
    suffix = np.ones((n, L + 1), dtype=vals.dtype)
    np.cumprod(vals, axis=1, out=prefix[:, 1:])
    np.cumprod(vals[:, ::-1], axis=1, out=suffix[:, 1:])
    # prefix[:, k] = prod(vals[:, :k]);  suffix[:, m] = prod of the last m columns
    return prefix[:, :L] * suffix[:, L - 1::-1]


def poly_gradient(slots, coef, z):
    size = z.shape[0]
    out = np.zeros(size, dtype=np.complex128)
    if slots.shape[0] == 0:
        return out
    vals = z[slots]
    others = _others_product(vals) * coef[:, None]
    flat_idx = slots.ravel()
    flat = others.ravel()
    out.real = np.bincount(flat_idx, weights=flat.real, minlength=size)
    out.imag = np.bincount(flat_idx, weights=flat.imag, minlength=size)
    return out


def _xi_rate(xi, slots, coef, n):
    ext = np.empty(2 * n + 1, dtype=np.complex128)
    ext[:n] = xi
    ext[n:2 * n] = np.conj(xi)
    ext[2 * n] = 1.0
    g = poly_gradient(slots, coef, ext)
    return -1j * g[n:2 * n]


def rk4_flow(xi, slots, coef, h, nsteps, sign):
    """Integrate ``dxi/dt = sign * (-i dP/dxibar)`` with classical RK4."""
    n = xi.shape[0]
    y = xi.copy()
    for _ in range(nsteps):
        k1 = sign * _xi_rate(y, slots, coef, n)
        k2 = sign * _xi_rate(y + 0.5 * h * k1, slots, coef, n)
        k3 = sign * _xi_rate(y + 0.5 * h * k2, slots, coef, n)
        k4 = sign * _xi_rate(y + h * k3, slots, coef, n)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def split_steps(xi, omega, slots, coef, dt, weights, nsteps):
    """Run ``nsteps`` composed Strang steps (exact rotation + one RK4 substep).

    ``weights`` lists the fractions of ``dt`` used by each Strang stage of
    the composition (``[1.0]`` is plain Strang).
    """
    y = xi.copy()
    rot = [np.exp(-0.5j * w * dt * omega) for w in weights]
    for _ in range(nsteps):
        for k, w in enumerate(weights):
            y = y * rot[k]
            if slots.shape[0]:
                y = rk4_flow(y, slots, coef, w * dt, 1, 1.0)
            y = y * rot[k]
    return y


def min_log_margin(slots, signs, log_thr, group, n_groups, omega):
    """Per-group minimum of ``log|sum sign*omega[slot]| - log_thr``.

    ``omega`` may be a 2-d array (one row per parameter sample); the result
    then has shape ``(samples, n_groups)``.
    """
    omega = np.atleast_2d(omega)
    out = np.full((omega.shape[0], n_groups), np.inf)
    if slots.shape[0] == 0:
        return out
    for s in range(omega.shape[0]):
        div = np.abs(np.sum(signs * omega[s][slots], axis=1))
        with np.errstate(divide="ignore"):
            margin = np.log(div) - log_thr
        np.minimum.at(out[s], group, margin)
    return out
