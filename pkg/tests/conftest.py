import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from torus_bnf.lattice import conjugate_code
from torus_bnf.polynomial import HomogeneousPolynomial, PolynomialFamily, StateVector, mode_box

settings.register_profile(
    "repo", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("repo")


def random_key(rng, order, dim, cutoff):
    box = mode_box(dim, cutoff)
    codes = box.all_codes()
    return tuple(sorted(codes[k] for k in rng.integers(0, len(codes), size=order)))


def random_poly(rng, order, dim=1, cutoff=3, n_terms=6, real=False, scale=1.0):
    """Random symmetric polynomial; ``real=True`` adds the conjugate terms."""
    terms = {}
    for _ in range(n_terms):
        key = random_key(rng, order, dim, cutoff)
        c = scale * complex(rng.normal(), rng.normal())
        terms[key] = terms.get(key, 0j) + c
    if real:
        sym = {}
        for key, c in terms.items():
            ck = tuple(sorted(conjugate_code(v, dim) for v in key))
            sym[key] = sym.get(key, 0j) + c
            sym[ck] = sym.get(ck, 0j) + c.conjugate()
        terms = sym
    return HomogeneousPolynomial(order, dim, terms)


def random_family(rng, orders, dim=1, cutoff=3, n_terms=5, real=False, scale=1.0):
    parts = [random_poly(rng, o, dim, cutoff, n_terms, real, scale) for o in orders]
    return PolynomialFamily(parts, max(orders), dim=dim)


def random_state(rng, dim=1, cutoff=3, scale=1.0):
    n = len(mode_box(dim, cutoff))
    return StateVector(dim, cutoff, scale * (rng.normal(size=n) + 1j * rng.normal(size=n)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
