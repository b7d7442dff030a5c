import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_family
from torus_bnf import kernels
from torus_bnf.measure import build_scan, nls_omega_samples
from torus_bnf.polynomial import evaluate, gradient, mode_box, StateVector

BACKENDS = kernels.backends()
needs_numba = pytest.mark.skipif("numba" not in BACKENDS, reason="numba not installed")


@pytest.fixture
def problem():
    rng = np.random.default_rng(99)
    F = random_family(rng, [3, 4, 5], cutoff=4, n_terms=12, real=True, scale=0.3)
    box = mode_box(1, 4)
    slots, coef = F.compiled(box)
    xi = 0.2 * (rng.normal(size=len(box)) + 1j * rng.normal(size=len(box)))
    ext = np.concatenate([xi, xi.conj(), [1.0 + 0j]])
    omega = np.sqrt(box.sq_norms + 1.3)
    return F, box, slots, coef, xi, ext, omega


def test_backend_matches_env_flag():
    want = os.environ.get(kernels.ENV_FLAG, "numba")
    assert kernels.BACKEND == ("numpy" if want == "numpy" or not kernels.HAS_NUMBA else "numba")


def test_env_flag_forces_numpy():
    env = dict(os.environ, **{kernels.ENV_FLAG: "numpy"})
    out = subprocess.run([sys.executable, "-c", "from torus_bnf import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_bad_env_flag_rejected():
    env = dict(os.environ, **{kernels.ENV_FLAG: "fortran"})
    out = subprocess.run([sys.executable, "-c", "import torus_bnf.kernels"], env=env,
                         capture_output=True, text=True)
    assert out.returncode != 0 and "TORUS_BNF_KERNELS" in out.stderr


def test_compiled_value_and_gradient_match_dictionary_evaluation(problem):
    F, box, slots, coef, xi, ext, _ = problem
    z = StateVector(1, 4, xi)
    for impl in BACKENDS.values():
        assert impl["poly_value"](slots, coef, ext) == pytest.approx(evaluate(F, z), rel=1e-12)
        g = impl["poly_gradient"](slots, coef, ext)[:-1]
        np.testing.assert_allclose(g, gradient(F, z), rtol=1e-11, atol=1e-14)


@needs_numba
def test_backends_agree(problem):
    _, box, slots, coef, xi, ext, omega = problem
    nb, npy = BACKENDS["numba"], BACKENDS["numpy"]
    np.testing.assert_allclose(nb["poly_gradient"](slots, coef, ext),
                               npy["poly_gradient"](slots, coef, ext), rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(nb["rk4_flow"](xi, slots, coef, 0.05, 20, -1.0),
                               npy["rk4_flow"](xi, slots, coef, 0.05, 20, -1.0), rtol=1e-12)
    w = np.array([1.351207191959658, -1.702414383919315, 1.351207191959658])
    np.testing.assert_allclose(nb["split_steps"](xi, omega, slots, coef, 0.01, w, 50),
                               npy["split_steps"](xi, omega, slots, coef, 0.01, w, 50), rtol=1e-12)
    scan = build_scan(2, 1, 2, 45.0, "I")
    _, om = nls_omega_samples(2, 1, 2.0, 16, 3)
    a = nb["min_log_margin"](scan.slots, scan.signs, scan.log_factor, scan.group, scan.n_groups, om)
    b = npy["min_log_margin"](scan.slots, scan.signs, scan.log_factor, scan.group, scan.n_groups, om)
    np.testing.assert_allclose(a, b, rtol=1e-13)


def test_empty_polynomial_is_inert(problem):
    _, box, _, _, xi, ext, omega = problem
    slots = np.zeros((0, 3), dtype=np.int64)
    coef = np.zeros(0, dtype=np.complex128)
    for impl in BACKENDS.values():
        assert impl["poly_value"](slots, coef, ext) == 0
        np.testing.assert_array_equal(impl["rk4_flow"](xi, slots, coef, 0.1, 3, 1.0), xi)
        out = impl["split_steps"](xi, omega, slots, coef, 0.1, np.array([1.0]), 10)
        np.testing.assert_allclose(out, xi * np.exp(-1j * omega), rtol=1e-13)
