"""Numerical kernels with a numba backend and a pure-numpy fallback.

The backend is chosen once at import time.  Set the environment variable
``TORUS_BNF_KERNELS=numpy`` to force the fallback (it is also used when
numba cannot be imported).  Both backends expose the same functions:

``poly_value(slots, coef, z)``
    sum over rows of ``coef[n] * prod(z[slots[n]])``.
``poly_gradient(slots, coef, z)``
    derivative of that sum with respect to every entry of ``z``.
``rk4_flow(xi, slots, coef, h, nsteps, sign)``
    RK4 for ``dxi/dt = -i * sign * dP/dxibar`` on ``[xi, conj(xi), 1]``.
``split_steps(xi, omega, slots, coef, dt, weights, nsteps)``
    composed Strang steps: exact rotation ``exp(-i omega t)`` plus an RK4
    substep for the polynomial part.
``min_log_margin(slots, signs, log_thr, group, n_groups, omega)``
    per-group minimum of ``log|sum signs*omega[slots]| - log_thr``.
"""

from __future__ import annotations

import os

import numpy as np

from . import _loops, _vectorized

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

ENV_FLAG = "TORUS_BNF_KERNELS"

_NAMES = ("poly_value", "poly_gradient", "rk4_flow", "split_steps", "min_log_margin")


_COMPILED = {}


def _compile_loops():
    if _COMPILED:
        return _COMPILED
    jit = numba.njit(cache=True)
    # helpers first so the public kernels can call compiled versions
    _loops._accumulate_gradient = jit(_loops._accumulate_gradient)
    _loops._xi_rate = jit(_loops._xi_rate)
    _loops.rk4_flow = jit(_loops.rk4_flow)
    compiled = {
        "poly_value": jit(_loops.poly_value),
        "poly_gradient": jit(_loops.poly_gradient),
        "rk4_flow": _loops.rk4_flow,
        "split_steps": jit(_loops.split_steps),
        "min_log_margin": jit(_loops.min_log_margin),
    }
    _COMPILED.update(compiled)
    return _COMPILED


def _numpy_backend():
    return {name: getattr(_vectorized, name) for name in _NAMES}


def _select():
    want = os.environ.get(ENV_FLAG, "numba").strip().lower()
    if want not in ("numba", "numpy"):
        raise ValueError(f"{ENV_FLAG} must be 'numba' or 'numpy', got {want!r}")
    if want == "numba" and HAS_NUMBA:
        return "numba", _compile_loops()
    return "numpy", _numpy_backend()


BACKEND, _impl = _select()


def backends() -> dict:
    """Both implementations, keyed by backend name (for benchmarks and tests)."""
    out = {"numpy": _numpy_backend()}
    if HAS_NUMBA:
        out["numba"] = _compile_loops()
    return out


def poly_value(slots, coef, z):
    return _impl["poly_value"](slots, coef, z)


def poly_gradient(slots, coef, z):
    return _impl["poly_gradient"](slots, coef, z)


def rk4_flow(xi, slots, coef, h, nsteps, sign=1.0):
    return _impl["rk4_flow"](np.ascontiguousarray(xi, dtype=np.complex128), slots, coef,
                             float(h), int(nsteps), float(sign))


def split_steps(xi, omega, slots, coef, dt, weights, nsteps):
    return _impl["split_steps"](np.ascontiguousarray(xi, dtype=np.complex128),
                                np.ascontiguousarray(omega, dtype=np.float64), slots, coef,
                                float(dt), np.asarray(weights, dtype=np.float64), int(nsteps))


def min_log_margin(slots, signs, log_thr, group, n_groups, omega):
    omega = np.ascontiguousarray(np.atleast_2d(omega), dtype=np.float64)
    return _impl["min_log_margin"](slots, signs, log_thr, group, int(n_groups), omega)
