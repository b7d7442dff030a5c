import json
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_family, random_poly, random_state
from torus_bnf.frequencies import FrequencyModel, key_signed_sum, linear_hamiltonian
from torus_bnf.lattice import IndexTuple, momentum
from torus_bnf.polynomial import (
    HomogeneousPolynomial,
    PolynomialFamily,
    StateVector,
    evaluate,
    family_from_dict,
    family_norm,
    family_to_dict,
    gradient,
    mode_box,
    poisson_bracket,
    polynomial_from_dict,
    polynomial_to_dict,
    reality_check,
    sn_norm,
    sobolev_norm,
    symmetrize,
    vector_field,
)

seeds = st.integers(0, 2 ** 32 - 1)


def mono(pairs, dim=1):
    """Polynomial from ``[(tuple, orbit_sum)]`` pairs."""
    order = len(pairs[0][0])
    return HomogeneousPolynomial.from_monomials(order, dim, pairs)


def max_coeff_diff(f, g):
    keys = set(f.keys()) | set(g.keys())
    fd, gd = dict(f.raw_items()), dict(g.raw_items())
    return max((abs(fd.get(k, 0) - gd.get(k, 0)) for k in keys), default=0.0)


class TestSymmetrize:
    def test_single_term(self):
        f = symmetrize([(((1, 0), (1, 0), (1, 0)), 1.0)])
        assert len(f) == 1
        assert f.coefficient([(1, 0)] * 3) == 1.0

    def test_merge(self):
        f = symmetrize([(((1, 1), (-1, 2)), 1.0), (((-1, 2), (1, 1)), 1.0)])
        assert len(f) == 1
        assert f.coefficient([(1, 1), (-1, 2)]) == 2.0

    def test_mixed_orders_rejected(self):
        with pytest.raises(ValueError):
            symmetrize([(((1, 0),), 1.0), (((1, 0), (1, 1)), 1.0)])

    def test_evaluation_matches_written_form(self):
        rng = np.random.default_rng(0)
        raw = []
        for _ in range(8):
            t = tuple((int(rng.choice([1, -1])), int(rng.integers(-2, 3))) for _ in range(3))
            raw.append((t, complex(rng.normal(), rng.normal())))
        f = symmetrize(raw)
        for _ in range(100):
            z = random_state(rng, 1, 2)
            direct = 0j
            for t, c in raw:
                m = c
                for delta, a in t:
                    m *= z[a] if delta == 1 else np.conj(z[a])
                direct += m
            assert evaluate(f, z) == pytest.approx(direct, rel=1e-12, abs=1e-12)


class TestNorms:
    def test_pure_zero_mode(self):
        f = mono([([(1, 0)] * 3, 1.0)])
        for s, N in [(0, 0), (1, 3), (2.5, 7)]:
            assert sn_norm(f, s, N) == pytest.approx(1.0)

    def test_hand_value(self):
        f = mono([([(1, 2), (-1, 1), (-1, 1)], 1.0)])
        assert sn_norm(f, 1, 1) == pytest.approx(0.25)

    def test_rejects_n_below_s(self):
        with pytest.raises(ValueError):
            sn_norm(mono([([(1, 0)] * 3, 1.0)]), 2, 1)

    @given(seeds, st.floats(0, 3), st.floats(0, 3))
    def test_decreasing_in_s(self, seed, s1, s2):
        f = random_poly(np.random.default_rng(seed), 3, 1, 4)
        lo, hi = sorted([s1, s2])
        assert sn_norm(f, hi, 6) <= sn_norm(f, lo, 6) * (1 + 1e-12)

    def test_family_norm_examples(self):
        assert family_norm(PolynomialFamily((), 5, dim=1), 0, 1, 0.3) == 0.0
        f3 = mono([([(1, 0)] * 3, 1.0)])
        assert family_norm(PolynomialFamily([f3]), 0, 0, 0.5) == pytest.approx(0.5)
        f3b = f3.scale(2.0)
        f4 = mono([([(1, 0)] * 4, 4.0)])
        assert family_norm(PolynomialFamily([f3b, f4]), 0, 0, 0.1) == pytest.approx(0.24)


def _sympy_bracket_value(f, g, z):
    """Evaluate ``{f, g}`` through symbolic differentiation."""
    box = z.box
    xs = sp.symbols(f"x0:{len(box)}")
    ys = sp.symbols(f"y0:{len(box)}")

    def expr(h):
        out = 0
        for t, c in h.items():
            m = sp.nsimplify(0) + complex(c)
            for j in t:
                k = box.position[j.a]
                m = m * (xs[k] if j.delta == 1 else ys[k])
            out += m
        return out

    F, G = expr(f), expr(g)
    br = -sp.I * sum(sp.diff(F, xs[k]) * sp.diff(G, ys[k]) - sp.diff(F, ys[k]) * sp.diff(G, xs[k])
                     for k in range(len(box)))
    subs = {xs[k]: z.xi[k] for k in range(len(box))}
    subs.update({ys[k]: np.conj(z.xi[k]) for k in range(len(box))})
    return complex(sp.N(br.subs(subs)))


class TestBracket:
    def test_actions_commute(self):
        for a in range(-2, 3):
            for b in range(-2, 3):
                ia = mono([([(1, a), (-1, a)], 1.0)])
                ib = mono([([(1, b), (-1, b)], 1.0)])
                assert poisson_bracket(ia, ib).is_zero()

    def test_square_example(self):
        f = mono([([(1, 0), (1, 0)], 1.0)])
        g = mono([([(-1, 0), (-1, 0)], 1.0)])
        h = poisson_bracket(f, g)
        assert h.order == 2 and len(h) == 1
        assert h.coefficient([(1, 0), (-1, 0)]) == pytest.approx(-4j)

    def test_linear_hamiltonian_eigen_relation(self):
        freq = FrequencyModel.nlw(1.3)
        h0 = linear_hamiltonian(freq, mode_box(1, 3))
        rng = np.random.default_rng(1)
        f = random_poly(rng, 3, 1, 3)
        br = poisson_bracket(h0, f)
        for key, c in f.raw_items():
            omega = key_signed_sum(freq, key, 1)
            assert dict(br.raw_items()).get(key, 0) == pytest.approx(1j * omega * c, abs=1e-12)

    def test_matches_symbolic_differentiation(self):
        rng = np.random.default_rng(2)
        for orders in [(2, 3), (3, 3), (3, 4)]:
            f = random_poly(rng, orders[0], 1, 1, n_terms=4)
            g = random_poly(rng, orders[1], 1, 1, n_terms=4)
            z = random_state(rng, 1, 1, 0.7)
            assert evaluate(poisson_bracket(f, g), z) == pytest.approx(
                _sympy_bracket_value(f, g, z), rel=1e-10)

    @given(seeds, st.integers(2, 4), st.integers(2, 4), st.integers(1, 2))
    def test_antisymmetry(self, seed, r1, r2, d):
        rng = np.random.default_rng(seed)
        f = random_poly(rng, r1, d, 2, 8)
        g = random_poly(rng, r2, d, 2, 8)
        fg, gf = poisson_bracket(f, g), poisson_bracket(g, f)
        scale = max(fg.max_abs_coefficient(), 1e-300)
        assert max_coeff_diff(fg, gf.scale(-1)) <= 1e-12 * scale

    @given(seeds)
    def test_jacobi(self, seed):
        rng = np.random.default_rng(seed)
        f, g, h = (random_poly(rng, o, 1, 2, 6) for o in rng.integers(2, 5, 3))
        total = (poisson_bracket(f, poisson_bracket(g, h)) + poisson_bracket(g, poisson_bracket(h, f))
                 + poisson_bracket(h, poisson_bracket(f, g)))
        assert total.max_abs_coefficient() <= 1e-10

    @given(seeds)
    def test_real_inputs_give_real_bracket(self, seed):
        rng = np.random.default_rng(seed)
        f = random_poly(rng, 3, 1, 3, real=True)
        g = random_poly(rng, 4, 1, 3, real=True)
        assert reality_check(poisson_bracket(f, g), rtol=1e-12)

    @given(seeds)
    def test_momentum_adds(self, seed):
        rng = np.random.default_rng(seed)
        f = random_poly(rng, 3, 2, 2, 3)
        g = random_poly(rng, 3, 2, 2, 3)
        mf = {momentum(t) for t, _ in f.items()}
        mg = {momentum(t) for t, _ in g.items()}
        sums = {tuple(a + b for a, b in zip(x, y)) for x in mf for y in mg}
        for t, _ in poisson_bracket(f, g).items():
            assert momentum(t) in sums

    @given(seeds, st.sampled_from([(1, 2), (2, 4)]))
    def test_bracket_norm_bound(self, seed, sN):
        s, N = sN
        rng = np.random.default_rng(seed)
        r1, r2 = (int(x) for x in rng.integers(3, 6, 2))
        f = random_poly(rng, r1, 1, 4, 6)
        g = random_poly(rng, r2, 1, 4, 6)
        lhs = sn_norm(poisson_bracket(f, g), s, N)
        assert lhs <= 2 * r1 * r2 * sn_norm(f, s, N) * sn_norm(g, s, N) * (1 + 1e-12)


class TestEvaluation:
    def test_examples(self):
        f = mono([([(1, 0)] * 3, 1.0)])
        assert evaluate(f, StateVector(1, 1, {0: 2.0})) == pytest.approx(8.0)
        g = mono([([(1, 1), (-1, 1)], 1.0)])
        assert evaluate(g, StateVector(1, 1, {1: 3j})) == pytest.approx(9.0)

    def test_reality_examples(self):
        assert reality_check(mono([([(1, 2), (-1, 2)], 1.0)]))
        assert not reality_check(mono([([(1, 0), (1, 0)], 1.0)]))
        assert reality_check(mono([([(1, 0), (1, 0)], 1.0), ([(-1, 0), (-1, 0)], 1.0)]))

    @given(seeds)
    def test_real_polynomials_evaluate_to_reals(self, seed):
        rng = np.random.default_rng(seed)
        f = random_poly(rng, 4, 2, 1, real=True)
        z = random_state(rng, 2, 1)
        v = evaluate(f, z)
        assert abs(v.imag) <= 1e-12 * max(1.0, abs(v))

    def test_family_evaluation_adds_parts(self, rng):
        F = random_family(rng, [3, 4, 5])
        z = random_state(rng, 1, 3, 0.5)
        assert evaluate(F, z) == pytest.approx(sum(evaluate(p, z) for p in F), rel=1e-12)

    def test_sobolev_norm_convention(self):
        z = StateVector(1, 2, {0: 1.0})
        for s in (0, 1, 3):
            assert sobolev_norm(z, s) == pytest.approx(math.sqrt(2))
        rng = np.random.default_rng(5)
        w = random_state(rng, 2, 2)
        assert sobolev_norm(w.scaled(-3j), 1.5) == pytest.approx(3 * sobolev_norm(w, 1.5))
        assert sobolev_norm(w, 0) == pytest.approx(math.sqrt(2) * np.linalg.norm(w.xi))


class TestVectorField:
    def test_action_example(self):
        f = mono([([(1, 0), (-1, 0)], 1.0)])
        X = vector_field(f, StateVector(1, 1, {0: 1.0}))
        k = mode_box(1, 1).position[(0,)]
        assert X.d_xi[k] == pytest.approx(-1j)
        assert X.d_xibar[k] == pytest.approx(1j)
        assert np.all(np.delete(X.d_xi, k) == 0)

    def test_finite_differences(self):
        rng = np.random.default_rng(7)
        h = 1e-6
        for _ in range(20):
            f = random_poly(rng, int(rng.integers(3, 5)), 1, 2, 5)
            z = random_state(rng, 1, 2, 0.8)
            g = gradient(f, z)
            n = len(z.box)
            for k in range(n):
                e = np.zeros(n)
                e[k] = 1.0
                dx = (evaluate(f, StateVector(1, 2, z.xi + h * e))
                      - evaluate(f, StateVector(1, 2, z.xi - h * e))) / (2 * h)
                dy = (evaluate(f, StateVector(1, 2, z.xi + 1j * h * e))
                      - evaluate(f, StateVector(1, 2, z.xi - 1j * h * e))) / (2 * h)
                d_xi = 0.5 * (dx - 1j * dy)
                d_xibar = 0.5 * (dx + 1j * dy)
                scale = max(abs(g[k]), abs(g[n + k]), 1e-3)
                assert abs(d_xi - g[k]) <= 1e-6 * scale
                assert abs(d_xibar - g[n + k]) <= 1e-6 * scale

    def test_out_of_cutoff_rejected(self):
        f = mono([([(1, 5), (-1, 5), (1, 0)], 1.0)])
        with pytest.raises(ValueError):
            evaluate(f, StateVector(1, 2))


class TestSerialization:
    @given(seeds)
    def test_round_trip_bit_exact(self, seed):
        rng = np.random.default_rng(seed)
        F = random_family(rng, [3, 4], dim=2, cutoff=2)
        doc = json.loads(json.dumps(family_to_dict(F)))
        G = family_from_dict(doc)
        for o in F.orders():
            assert dict(F[o].raw_items()) == dict(G[o].raw_items())
        f = F[3]
        assert dict(polynomial_from_dict(polynomial_to_dict(f)).raw_items()) == dict(f.raw_items())

    def test_schema(self):
        f = mono([([(1, 2), (-1, 1), (-1, 1)], 0.5 + 1j)])
        doc = polynomial_to_dict(f)
        assert doc == {"dim": 1, "order": 3,
                       "terms": [{"tuple": [[1, 2], [-1, 1], [-1, 1]], "re": 0.5, "im": 1.0}]}


class TestFamily:
    def test_grading_and_cap(self, rng):
        F = random_family(rng, [3, 5])
        assert F.min_order() == 3 and F.orders() == [3, 5]
        capped = F.with_cap(4)
        assert capped.orders() == [3] and capped.tail_dropped
        with pytest.raises(ValueError):
            PolynomialFamily([random_poly(rng, 6)], order_cap=5)

    def test_arithmetic(self, rng):
        F = random_family(rng, [3, 4])
        assert (F - F).is_zero()
        z = random_state(rng, 1, 3, 0.3)
        assert evaluate(F.scale(2.5), z) == pytest.approx(2.5 * evaluate(F, z))


def test_index_tuple_keys_are_shared():
    t = IndexTuple([(1, 2), (-1, 0), (1, 1)])
    f = HomogeneousPolynomial.from_monomials(3, 1, [(t.entries, 1.0)])
    assert list(f.keys()) == [t.canonical_key]
