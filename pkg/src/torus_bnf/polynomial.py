"""Sparse symmetric homogeneous polynomials in the variables ``z_j``.

A homogeneous polynomial of order ``l`` is stored as a dictionary from a
canonical key (sorted tuple of integer index codes, see :mod:`lattice`) to
the *orbit-sum* coefficient ``c``: the total weight of the monomial.  The
symmetric coefficient attached to each ordered tuple is ``c / orbit_size``.

The Poisson bracket follows the convention

    {H, F} = -i sum_a (dH/dxi_a dF/dxibar_a - dH/dxibar_a dF/dxi_a),

and the Hamiltonian vector field is ``X_H = -i (dH/dxibar, -dH/dxi)``.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np

from . import kernels
from .lattice import (
    IndexTuple,
    ModeBox,
    as_index,
    code_info,
    decode,
    delta_bit,
    encode,
    orbit_size,
)

PRUNE_THRESHOLD = 1e-300


class HomogeneousPolynomial:
    """Order-``l`` symmetric polynomial stored as orbit sums.

    Parameters
    ----------
    order : int
        Common length of every monomial.  Order 0 only ever holds the empty
        polynomial (it is what a bracket of two linear forms collapses to).
    dim : int
        Lattice dimension ``d``.
    terms : mapping, optional
        Canonical key -> orbit-sum coefficient.  Keys must already be
        sorted tuples of codes; use :func:`symmetrize` for raw input.
    """

    __slots__ = ("order", "dim", "_terms", "_cache")

    def __init__(self, order: int, dim: int, terms: Mapping | None = None,
                 prune: float = PRUNE_THRESHOLD):
        if order < 0:
            raise ValueError("order must be non-negative")
        self.order = int(order)
        self.dim = int(dim)
        clean = {}
        if terms:
            for key, c in terms.items():
                c = complex(c)
                if abs(c) > prune:
                    if len(key) != self.order:
                        raise ValueError(f"term {key} does not have order {self.order}")
                    clean[tuple(key)] = c
        if self.order == 0:
            clean = {}
        self._terms = clean
        self._cache = {}

    # -- construction -------------------------------------------------------

    @classmethod
    def zero(cls, order: int, dim: int) -> "HomogeneousPolynomial":
        return cls(order, dim)

    @classmethod
    def from_monomials(cls, order: int, dim: int, pairs: Iterable) -> "HomogeneousPolynomial":
        """Build from ``(tuple_of_indices, orbit_sum_coefficient)`` pairs.

        Permutation-equivalent tuples are merged by adding coefficients.
        """
        acc = defaultdict(complex)
        for t, c in pairs:
            key = IndexTuple(t).canonical_key
            acc[key] += c
        return cls(order, dim, acc)

    # -- basic access --------------------------------------------------------

    def __len__(self):
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def keys(self):
        return self._terms.keys()

    def raw_items(self):
        """Iterate over ``(canonical_key, orbit_sum)`` pairs (keys are codes)."""
        return self._terms.items()

    def items(self):
        """Iterate over ``(IndexTuple, orbit_sum)`` pairs in canonical order."""
        for key in sorted(self._terms):
            yield IndexTuple.from_key(key, self.dim), self._terms[key]

    def coefficient(self, t) -> complex:
        """Orbit-sum coefficient of the monomial named by any ordering of ``t``."""
        key = IndexTuple(t).canonical_key
        return self._terms.get(key, 0j)

    def symmetric_coefficient(self, t) -> complex:
        key = IndexTuple(t).canonical_key
        return self._terms.get(key, 0j) / orbit_size(key)

    def __repr__(self):
        return f"HomogeneousPolynomial(order={self.order}, dim={self.dim}, terms={len(self)})"

    # -- linear structure ----------------------------------------------------

    def _check_compatible(self, other):
        if not isinstance(other, HomogeneousPolynomial):
            return NotImplemented
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        if other.order != self.order and not (self.is_zero() or other.is_zero()):
            raise ValueError(f"cannot add orders {self.order} and {other.order}")
        return None

    def __add__(self, other):
        if self._check_compatible(other) is NotImplemented:
            return NotImplemented
        if other.is_zero():
            return self
        if self.is_zero():
            return other
        acc = dict(self._terms)
        for k, c in other._terms.items():
            acc[k] = acc.get(k, 0j) + c
        return HomogeneousPolynomial(self.order, self.dim, acc)

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, factor: complex) -> "HomogeneousPolynomial":
        return HomogeneousPolynomial(self.order, self.dim,
                                     {k: factor * c for k, c in self._terms.items()})

    def __mul__(self, factor):
        if isinstance(factor, (int, float, complex, np.number)):
            return self.scale(factor)
        return NotImplemented

    __rmul__ = __mul__

    def conjugate(self) -> "HomogeneousPolynomial":
        """The polynomial whose value at ``z`` is ``conj(f(z))``."""
        dbit = delta_bit(self.dim)
        return HomogeneousPolynomial(
            self.order, self.dim,
            {tuple(sorted(v ^ dbit for v in k)): c.conjugate() for k, c in self._terms.items()})

    def max_abs_coefficient(self) -> float:
        if not self._terms:
            return 0.0
        return max(abs(c) for c in self._terms.values())

    def modes(self) -> set:
        return {code_info(v, self.dim)[1] for k in self._terms for v in k}

    def max_mode(self) -> int:
        """Largest ``|a_i|`` appearing in any monomial (0 when empty)."""
        return max((max(abs(x) for x in a) for a in self.modes()), default=0)

    # -- norm bookkeeping ----------------------------------------------------

    def _norm_data(self):
        """Per-term momentum-class id, log weight ratio, |f~|, class weights."""
        data = self._cache.get("norm")
        if data is not None:
            return data
        d = self.dim
        classes = {}
        cls_ids = np.empty(len(self._terms), dtype=np.int64)
        log_ratio = np.empty(len(self._terms))
        absf = np.empty(len(self._terms))
        for n, (key, c) in enumerate(self._terms.items()):
            mom = [0] * d
            ws = []
            for v in key:
                delta, a, _, w = code_info(v, d)
                ws.append(w)
                for i in range(d):
                    mom[i] += delta * a[i]
            ws.sort(reverse=True)
            lr = math.log(ws[0])
            for w in ws[1:]:
                lr -= math.log(w)
            log_ratio[n] = lr
            absf[n] = abs(c) / orbit_size(key)
            cls_ids[n] = classes.setdefault(tuple(mom), len(classes))
        class_weight = np.empty(len(classes))
        for mom, k in classes.items():
            class_weight[k] = 1.0 + math.sqrt(sum(x * x for x in mom))
        data = (cls_ids, log_ratio, absf, class_weight)
        self._cache["norm"] = data
        return data

    # -- numerics ------------------------------------------------------------

    def compiled(self, box: ModeBox):
        """Slot matrix and coefficients for the numerical kernels."""
        ck = ("compiled", box.dim, box.cutoff)
        out = self._cache.get(ck)
        if out is None:
            if box.dim != self.dim:
                raise ValueError("state dimension does not match the polynomial")
            keys = list(self._terms)
            slots = np.empty((len(keys), self.order), dtype=np.int64)
            for n, key in enumerate(keys):
                for k, v in enumerate(key):
                    slots[n, k] = box.slot(v)
            coef = np.array([self._terms[k] for k in keys], dtype=np.complex128)
            out = (slots, coef)
            self._cache[ck] = out
        return out


def symmetrize(raw: Iterable) -> HomogeneousPolynomial:
    """Merge ``(ordered tuple, coefficient)`` pairs into a symmetric polynomial.

    Each pair contributes ``coefficient * z_t`` (the tuple is read as a
    monomial written in that order), so permutation-equivalent tuples add up
    in the orbit sum.
    """
    raw = list(raw)
    if not raw:
        raise ValueError("symmetrize needs at least one term; use HomogeneousPolynomial.zero")
    tuples = [(IndexTuple(t), c) for t, c in raw]
    orders = {len(t) for t, _ in tuples}
    if len(orders) != 1:
        raise ValueError(f"mixed orders {sorted(orders)} in one homogeneous polynomial")
    dims = {t.dim for t, _ in tuples}
    if len(dims) != 1:
        raise ValueError("mixed dimensions")
    acc = defaultdict(complex)
    for t, c in tuples:
        acc[t.canonical_key] += c
    return HomogeneousPolynomial(orders.pop(), dims.pop(), acc)


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def sn_norm(f: HomogeneousPolynomial, s: float, N: float) -> float:
    """The ``|f|_{s,N}`` norm.

    Sum over momentum classes ``b`` of ``<b>^(N-s)`` times the largest value
    of ``(j1*/(j2*...jl*))^s |f~_j|`` among stored tuples with momentum ``b``.
    """
    if N < s:
        raise ValueError(f"the norm needs N >= s, got s={s}, N={N}")
    if s < 0:
        raise ValueError("s must be non-negative")
    if f.is_zero():
        return 0.0
    cls_ids, log_ratio, absf, class_weight = f._norm_data()
    vals = absf * np.exp(s * log_ratio)
    sup = np.zeros(len(class_weight))
    np.maximum.at(sup, cls_ids, vals)
    return float(np.sum(class_weight ** (N - s) * sup))


# ---------------------------------------------------------------------------
# Poisson bracket
# ---------------------------------------------------------------------------

def _contraction_index(g: HomogeneousPolynomial):
    """Map each variable code to the terms of ``g`` containing it.

    Values are lists of ``(key with one copy of the variable removed,
    multiplicity * coefficient)``.
    """
    idx = g._cache.get("contract")
    if idx is not None:
        return idx
    idx = defaultdict(list)
    for key, c in g._terms.items():
        prev = None
        for pos, v in enumerate(key):
            if v == prev:
                continue
            prev = v
            q = key.count(v)
            idx[v].append((key[:pos] + key[pos + 1:], q * c))
    idx = dict(idx)
    g._cache["contract"] = idx
    return idx


def poisson_bracket(f: HomogeneousPolynomial, g: HomogeneousPolynomial,
                    cleanup: float = PRUNE_THRESHOLD) -> HomogeneousPolynomial:
    """``{f, g}`` as a homogeneous polynomial of order ``r1 + r2 - 2``.

    For monomials ``c1 z^p`` and ``c2 z^q`` the bracket contracts one
    variable ``z_j`` of the first against ``z_jbar`` of the second with
    weight ``-i delta_j p_j q_jbar c1 c2``.
    """
    if f.dim != g.dim:
        raise ValueError("dimension mismatch in bracket")
    order = f.order + g.order - 2
    if order <= 0 or f.is_zero() or g.is_zero():
        return HomogeneousPolynomial(max(order, 0), f.dim)
    dbit = delta_bit(f.dim)
    gidx = _contraction_index(g)
    out = defaultdict(complex)
    for key, c in f._terms.items():
        prev = None
        for pos, v in enumerate(key):
            if v == prev:
                continue
            prev = v
            partners = gidx.get(v ^ dbit)
            if partners is None:
                continue
            p = key.count(v)
            rest = key[:pos] + key[pos + 1:]
            # -i * delta_j with delta_j = +1 when the delta bit is clear
            fac = (1j if v & dbit else -1j) * p * c
            for rest2, c2 in partners:
                out[tuple(sorted(rest + rest2))] += fac * c2
    return HomogeneousPolynomial(order, f.dim, out, prune=cleanup)


def reality_check(f: HomogeneousPolynomial, rtol: float = 1e-12) -> bool:
    """True when the coefficient of every conjugate tuple is the conjugate."""
    dbit = delta_bit(f.dim)
    scale = f.max_abs_coefficient()
    tol = rtol * scale
    for key, c in f._terms.items():
        ck = tuple(sorted(v ^ dbit for v in key))
        if abs(f._terms.get(ck, 0j) - c.conjugate()) > tol:
            return False
    return True


# ---------------------------------------------------------------------------
# graded families
# ---------------------------------------------------------------------------

class PolynomialFamily:
    """Finite sum of homogeneous parts, graded by order.

    Parameters
    ----------
    parts : mapping order -> HomogeneousPolynomial
    order_cap : int
        Largest order that is represented.
    tail_dropped : bool
        Whether terms beyond ``order_cap`` were discarded while building it.
    """

    def __init__(self, parts: Mapping | Iterable = (), order_cap: int | None = None,
                 tail_dropped: bool = False, dim: int | None = None):
        if isinstance(parts, Mapping):
            items = list(parts.items())
        else:
            items = [(p.order, p) for p in parts]
        clean = {}
        for order, p in items:
            if order != p.order:
                raise ValueError(f"part stored under order {order} has order {p.order}")
            if p.is_zero():
                continue
            if order in clean:
                clean[order] = clean[order] + p
            else:
                clean[order] = p
        dims = {p.dim for p in clean.values()}
        if dim is not None:
            dims.add(dim)
        if len(dims) > 1:
            raise ValueError("mixed dimensions in a family")
        self.dim = dims.pop() if dims else dim
        if order_cap is None:
            order_cap = max(clean, default=0)
        if clean and max(clean) > order_cap:
            raise ValueError("a part exceeds the order cap")
        self.parts = dict(sorted(clean.items()))
        self.order_cap = int(order_cap)
        self.tail_dropped = bool(tail_dropped)

    def __getitem__(self, order) -> HomogeneousPolynomial:
        p = self.parts.get(order)
        if p is None:
            return HomogeneousPolynomial(order, self.dim or 1)
        return p

    def __contains__(self, order):
        return order in self.parts

    def __iter__(self):
        return iter(self.parts.values())

    def __len__(self):
        return len(self.parts)

    def orders(self):
        return list(self.parts)

    def min_order(self):
        return min(self.parts, default=None)

    def is_zero(self) -> bool:
        return not self.parts

    def n_terms(self) -> int:
        return sum(len(p) for p in self.parts.values())

    def __add__(self, other: "PolynomialFamily") -> "PolynomialFamily":
        merged = dict(self.parts)
        for order, p in other.parts.items():
            merged[order] = merged[order] + p if order in merged else p
        return PolynomialFamily(merged, max(self.order_cap, other.order_cap),
                                self.tail_dropped or other.tail_dropped,
                                dim=self.dim or other.dim)

    def __neg__(self):
        return PolynomialFamily({o: -p for o, p in self.parts.items()}, self.order_cap,
                                self.tail_dropped, dim=self.dim)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, factor) -> "PolynomialFamily":
        return PolynomialFamily({o: p.scale(factor) for o, p in self.parts.items()},
                                self.order_cap, self.tail_dropped, dim=self.dim)

    def restricted(self, lo: int, hi: int) -> "PolynomialFamily":
        """Parts with ``lo <= order <= hi``."""
        return PolynomialFamily({o: p for o, p in self.parts.items() if lo <= o <= hi},
                                self.order_cap, self.tail_dropped, dim=self.dim)

    def with_cap(self, order_cap: int, tail_dropped: bool | None = None):
        dropped = any(o > order_cap for o in self.parts)
        flag = self.tail_dropped or dropped if tail_dropped is None else tail_dropped
        return PolynomialFamily({o: p for o, p in self.parts.items() if o <= order_cap},
                                order_cap, flag, dim=self.dim)

    def __repr__(self):
        body = ", ".join(f"{o}:{len(p)}" for o, p in self.parts.items())
        return (f"PolynomialFamily({{{body}}}, order_cap={self.order_cap}, "
                f"tail_dropped={self.tail_dropped})")

    def compiled(self, box: ModeBox):
        """All parts stacked into one slot matrix padded with the unit slot.

        The kernels evaluate on the extended vector ``[xi, conj(xi), 1]``,
        so padding a short monomial with the final slot leaves it unchanged.
        """
        if not self.parts:
            return np.zeros((0, 1), dtype=np.int64), np.zeros(0, dtype=np.complex128)
        width = max(self.parts)
        unit = 2 * len(box)
        blocks, coefs = [], []
        for p in self.parts.values():
            slots, coef = p.compiled(box)
            if slots.shape[1] < width:
                pad = np.full((slots.shape[0], width - slots.shape[1]), unit, dtype=np.int64)
                slots = np.hstack([slots, pad])
            blocks.append(slots)
            coefs.append(coef)
        return np.vstack(blocks), np.concatenate(coefs)


def family_norm(F: PolynomialFamily, s: float, N: float, R: float) -> float:
    """``sum_i |f_i|_{s,N} R^i`` where ``f_i`` is the part of order ``i + 2``."""
    if R <= 0:
        raise ValueError("R must be positive")
    if N < s:
        raise ValueError(f"the norm needs N >= s, got s={s}, N={N}")
    total = 0.0
    for order, p in F.parts.items():
        total += sn_norm(p, s, N) * R ** (order - 2)
    return total


# ---------------------------------------------------------------------------
# states, evaluation and vector fields
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def mode_box(dim: int, cutoff: int) -> ModeBox:
    return ModeBox(dim, cutoff)


class StateVector:
    """Fourier coefficients ``xi_a`` for all ``|a|_inf <= cutoff``.

    The conjugate coordinates are never stored: ``z_(-1,a) = conj(xi_a)``.
    """

    __slots__ = ("dim", "cutoff", "xi")

    def __init__(self, dim: int, cutoff: int, xi=None):
        self.dim = int(dim)
        self.cutoff = int(cutoff)
        n = len(mode_box(self.dim, self.cutoff))
        if xi is None:
            arr = np.zeros(n, dtype=np.complex128)
        elif isinstance(xi, Mapping):
            arr = np.zeros(n, dtype=np.complex128)
            box = self.box
            for a, v in xi.items():
                a = (int(a),) if isinstance(a, (int, np.integer)) else tuple(a)
                if a not in box.position:
                    raise ValueError(f"mode {a} lies outside the cutoff {cutoff}")
                arr[box.position[a]] = v
        else:
            arr = np.array(xi, dtype=np.complex128).reshape(-1)
            if arr.shape[0] != n:
                raise ValueError(f"expected {n} coefficients, got {arr.shape[0]}")
        self.xi = arr

    @property
    def box(self) -> ModeBox:
        return mode_box(self.dim, self.cutoff)

    def z(self) -> np.ndarray:
        """Doubled coordinate vector ``[xi, conj(xi)]``."""
        return np.concatenate([self.xi, self.xi.conj()])

    def extended(self) -> np.ndarray:
        return np.concatenate([self.xi, self.xi.conj(), [1.0 + 0j]])

    def __getitem__(self, a):
        a = (int(a),) if isinstance(a, (int, np.integer)) else tuple(a)
        return self.xi[self.box.position[a]]

    def copy(self) -> "StateVector":
        return StateVector(self.dim, self.cutoff, self.xi.copy())

    def scaled(self, c) -> "StateVector":
        return StateVector(self.dim, self.cutoff, c * self.xi)

    def __repr__(self):
        return f"StateVector(dim={self.dim}, cutoff={self.cutoff})"


def sobolev_norm(z: StateVector, s: float) -> float:
    """``sqrt(sum_j <j>^(2s) |z_j|^2)`` over both signs, i.e.
    ``sqrt(2 sum_a <a>^(2s) |xi_a|^2)``."""
    w = z.box.weights ** (2 * s)
    return math.sqrt(2.0 * float(np.sum(w * np.abs(z.xi) ** 2)))


def _check_cover(f, z: StateVector):
    if f.dim != z.dim:
        raise ValueError("state dimension does not match the polynomial")


def evaluate(f, z: StateVector) -> complex:
    """Value of a homogeneous polynomial or a family at the state ``z``."""
    _check_cover(f, z)
    box = z.box
    if isinstance(f, PolynomialFamily):
        slots, coef = f.compiled(box)
        return complex(kernels.poly_value(slots, coef, z.extended()))
    if f.is_zero():
        return 0j
    slots, coef = f.compiled(box)
    return complex(kernels.poly_value(slots, coef, z.z()))


def gradient(f, z: StateVector) -> np.ndarray:
    """``df/dz_j`` for every slot of the doubled vector ``[xi, conj(xi)]``."""
    _check_cover(f, z)
    box = z.box
    n2 = 2 * len(box)
    if isinstance(f, PolynomialFamily):
        slots, coef = f.compiled(box)
        return kernels.poly_gradient(slots, coef, z.extended())[:n2]
    if f.is_zero():
        return np.zeros(n2, dtype=np.complex128)
    slots, coef = f.compiled(box)
    return kernels.poly_gradient(slots, coef, z.z())


@dataclass(frozen=True)
class Tangent:
    """Components of a vector field along ``xi`` and along ``conj(xi)``."""

    dim: int
    cutoff: int
    d_xi: np.ndarray
    d_xibar: np.ndarray

    def z(self) -> np.ndarray:
        return np.concatenate([self.d_xi, self.d_xibar])

    def sobolev_norm(self, s: float) -> float:
        w = mode_box(self.dim, self.cutoff).weights ** (2 * s)
        return math.sqrt(float(np.sum(w * (np.abs(self.d_xi) ** 2 + np.abs(self.d_xibar) ** 2))))


def vector_field(f, z: StateVector) -> Tangent:
    """``X_f = -i (df/dxibar, -df/dxi)`` evaluated at ``z``."""
    g = gradient(f, z)
    n = len(z.box)
    return Tangent(z.dim, z.cutoff, -1j * g[n:], 1j * g[:n])


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def polynomial_to_dict(f: HomogeneousPolynomial) -> dict:
    terms = []
    for key in sorted(f.keys()):
        c = f._terms[key]
        entries = []
        for v in key:
            j = decode(v, f.dim)
            entries.append([j.delta, *j.a])
        terms.append({"tuple": entries, "re": c.real, "im": c.imag})
    return {"dim": f.dim, "order": f.order, "terms": terms}


def polynomial_from_dict(data: Mapping) -> HomogeneousPolynomial:
    dim = int(data["dim"])
    order = int(data["order"])
    acc = {}
    for term in data["terms"]:
        entries = term["tuple"]
        key = tuple(sorted(encode(as_index((int(e[0]), tuple(int(x) for x in e[1:]))))
                           for e in entries))
        if any(len(e) != dim + 1 for e in entries):
            raise ValueError("tuple entry length does not match dim")
        acc[key] = acc.get(key, 0j) + complex(float(term["re"]), float(term["im"]))
    return HomogeneousPolynomial(order, dim, acc)


def family_to_dict(F: PolynomialFamily) -> dict:
    return {
        "dim": F.dim,
        "order_cap": F.order_cap,
        "tail_dropped": F.tail_dropped,
        "parts": [polynomial_to_dict(p) for p in F.parts.values()],
    }


def family_from_dict(data: Mapping) -> PolynomialFamily:
    parts = [polynomial_from_dict(p) for p in data["parts"]]
    return PolynomialFamily(parts, int(data["order_cap"]), bool(data["tail_dropped"]),
                            dim=data.get("dim"))
