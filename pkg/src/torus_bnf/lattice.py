"""Signed Fourier indices on the lattice Z^d.

An index is a pair ``(delta, a)`` with ``delta`` in {+1, -1} and ``a`` an
integer vector.  The coordinate attached to ``(+1, a)`` is the Fourier
coefficient ``xi_a`` and the one attached to ``(-1, a)`` is its conjugate.

Internally, indices are packed into non-negative Python integers ("codes")
whose natural integer order coincides with the canonical order used for
sparse keys: ``delta = +1`` before ``delta = -1``, then lexicographic ``a``.
Packing keeps dictionary keys flat tuples of ints, which is what makes the
Poisson-bracket inner loop tolerable in pure Python.
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import product
from typing import Iterable, NamedTuple, Sequence

import numpy as np

MAX_DIM = 4
_FIELD_BITS = 16
_OFFSET = 1 << (_FIELD_BITS - 1)
_FIELD_MASK = (1 << _FIELD_BITS) - 1


class LatticeIndex(NamedTuple):
    """Signed Fourier index ``(delta, a)``."""

    delta: int
    a: tuple

    @property
    def dim(self) -> int:
        return len(self.a)

    def conjugate(self) -> "LatticeIndex":
        return LatticeIndex(-self.delta, self.a)

    def sort_key(self):
        return (-self.delta, self.a)


def make_index(delta: int, a) -> LatticeIndex:
    """Build a :class:`LatticeIndex`, accepting an int for ``a`` when d=1."""
    if delta not in (1, -1):
        raise ValueError(f"delta must be +1 or -1, got {delta!r}")
    if isinstance(a, (int, np.integer)):
        a = (int(a),)
    a = tuple(int(x) for x in a)
    if not 1 <= len(a) <= MAX_DIM:
        raise ValueError(f"dimension must be in 1..{MAX_DIM}, got {len(a)}")
    return LatticeIndex(int(delta), a)


def as_index(j) -> LatticeIndex:
    if isinstance(j, LatticeIndex):
        return j
    delta, a = j
    return make_index(delta, a)


# ---------------------------------------------------------------------------
# integer codes
# ---------------------------------------------------------------------------

def delta_bit(dim: int) -> int:
    return 1 << (_FIELD_BITS * dim)


def encode(j: LatticeIndex) -> int:
    """Pack an index into an int whose order matches the canonical order."""
    d = len(j.a)
    code = 0
    for x in j.a:
        if not -_OFFSET <= x < _OFFSET:
            raise ValueError(f"mode component {x} out of the supported range")
        code = (code << _FIELD_BITS) | (x + _OFFSET)
    if j.delta == -1:
        code |= delta_bit(d)
    return code


@lru_cache(maxsize=None)
def decode(code: int, dim: int) -> LatticeIndex:
    dbit = delta_bit(dim)
    delta = -1 if code & dbit else 1
    code &= dbit - 1
    a = []
    for _ in range(dim):
        a.append((code & _FIELD_MASK) - _OFFSET)
        code >>= _FIELD_BITS
    return LatticeIndex(delta, tuple(reversed(a)))


def conjugate_code(code: int, dim: int) -> int:
    return code ^ delta_bit(dim)


@lru_cache(maxsize=None)
def code_info(code: int, dim: int):
    """Cached ``(delta, a, |a|^2, weight)`` for a code."""
    j = decode(code, dim)
    sq = sum(x * x for x in j.a)
    return j.delta, j.a, sq, 1.0 + math.sqrt(sq)


# ---------------------------------------------------------------------------
# single-index and tuple arithmetic
# ---------------------------------------------------------------------------

def weight(j) -> float:
    """Return ``1 + |a|`` (Euclidean length of the mode)."""
    j = as_index(j)
    return 1.0 + math.sqrt(sum(x * x for x in j.a))


def mode_weight(a) -> float:
    if isinstance(a, (int, np.integer)):
        return 1.0 + abs(int(a))
    return 1.0 + math.sqrt(sum(int(x) * int(x) for x in a))


class IndexTuple:
    """Ordered list of lattice indices, with a permutation-invariant key.

    ``canonical_key`` is the tuple of integer codes in ascending order, which
    is the same thing as sorting the entries by (delta descending, a).
    """

    __slots__ = ("entries", "dim", "_key")

    def __init__(self, entries: Iterable):
        entries = tuple(as_index(j) for j in entries)
        if not entries:
            raise ValueError("an index tuple needs at least one entry")
        dims = {len(j.a) for j in entries}
        if len(dims) != 1:
            raise ValueError("mixed dimensions in one tuple")
        self.entries = entries
        self.dim = dims.pop()
        self._key = None

    @classmethod
    def from_key(cls, key: Sequence[int], dim: int) -> "IndexTuple":
        t = cls(decode(c, dim) for c in key)
        t._key = tuple(key)
        return t

    @property
    def canonical_key(self) -> tuple:
        if self._key is None:
            self._key = tuple(sorted(encode(j) for j in self.entries))
        return self._key

    def canonical(self) -> "IndexTuple":
        return IndexTuple.from_key(self.canonical_key, self.dim)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, k):
        return self.entries[k]

    def __eq__(self, other):
        return isinstance(other, IndexTuple) and self.entries == other.entries

    def __hash__(self):
        return hash(self.entries)

    def __repr__(self):
        body = ", ".join(f"({j.delta:+d},{list(j.a)})" for j in self.entries)
        return f"IndexTuple({body})"

    def conjugate(self) -> "IndexTuple":
        return IndexTuple(j.conjugate() for j in self.entries)


def _as_tuple(t) -> IndexTuple:
    return t if isinstance(t, IndexTuple) else IndexTuple(t)


def momentum(t) -> tuple:
    """Signed sum of modes ``delta_1 a_1 + ... + delta_l a_l``."""
    t = _as_tuple(t)
    out = [0] * t.dim
    for j in t.entries:
        for i, x in enumerate(j.a):
            out[i] += j.delta * x
    return tuple(out)


def decreasing_rearrangement(t) -> list:
    """Weights of the entries sorted in decreasing order."""
    t = _as_tuple(t)
    return sorted((weight(j) for j in t.entries), reverse=True)


def weight_ratio(t) -> float:
    """``j1* / (<M> j2* ... jl*)``, the base of the small-divisor threshold."""
    t = _as_tuple(t)
    w = decreasing_rearrangement(t)
    denom = mode_weight(momentum(t))
    for x in w[1:]:
        denom *= x
    return w[0] / denom


def _signed_balance(t, key_fn) -> bool:
    counts = {}
    for j in _as_tuple(t).entries:
        k = key_fn(j)
        counts[k] = counts.get(k, 0) + j.delta
    return all(v == 0 for v in counts.values())


def is_super_action_resonant(t) -> bool:
    """True when + and - entries pair up with equal ``|a|^2``."""
    return _signed_balance(t, lambda j: sum(x * x for x in j.a))


def is_action_resonant(t) -> bool:
    """True when + and - entries pair up with identical modes ``a``."""
    return _signed_balance(t, lambda j: j.a)


def check_rearrangement_bound(t) -> bool:
    """``j1* <= <M> j2* (j3* ... jl*)^(2/3)`` for a tuple of length >= 2."""
    t = _as_tuple(t)
    if len(t) < 2:
        raise ValueError("the rearrangement bound needs at least two entries")
    w = decreasing_rearrangement(t)
    tail = 1.0
    for x in w[2:]:
        tail *= x
    rhs = mode_weight(momentum(t)) * w[1] * tail ** (2.0 / 3.0)
    return w[0] <= rhs * (1.0 + 1e-14)


def orbit_size(key: Sequence) -> int:
    """Number of distinct orderings of a multiset given as a sorted key."""
    n = len(key)
    out = math.factorial(n)
    run = 1
    for i in range(1, n):
        if key[i] == key[i - 1]:
            run += 1
        else:
            out //= math.factorial(run)
            run = 1
    out //= math.factorial(run)
    return out


# ---------------------------------------------------------------------------
# finite mode sets
# ---------------------------------------------------------------------------

class ModeBox:
    """All modes ``a`` in Z^d with ``max|a_i| <= cutoff``, in lexicographic order.

    The phase-space vector used by the numerical kernels is laid out as
    ``z[:n] = xi`` and ``z[n:] = conj(xi)`` with ``n = len(box)``.
    """

    def __init__(self, dim: int, cutoff: int):
        if not 1 <= dim <= MAX_DIM:
            raise ValueError(f"dimension must be in 1..{MAX_DIM}")
        if cutoff < 0:
            raise ValueError("cutoff must be non-negative")
        self.dim = int(dim)
        self.cutoff = int(cutoff)
        rng = range(-self.cutoff, self.cutoff + 1)
        self.modes = [tuple(a) for a in product(rng, repeat=self.dim)]
        self.position = {a: k for k, a in enumerate(self.modes)}
        self.mode_array = np.array(self.modes, dtype=np.int64).reshape(len(self.modes), self.dim)
        self.sq_norms = (self.mode_array ** 2).sum(axis=1)
        self.weights = 1.0 + np.sqrt(self.sq_norms.astype(float))

    def __len__(self):
        return len(self.modes)

    def __contains__(self, a):
        return tuple(a) in self.position

    def __eq__(self, other):
        return isinstance(other, ModeBox) and (self.dim, self.cutoff) == (other.dim, other.cutoff)

    def __hash__(self):
        return hash((self.dim, self.cutoff))

    def slot(self, code: int) -> int:
        """Position of the coordinate ``z_j`` in the doubled state vector."""
        delta, a, _, _ = code_info(code, self.dim)
        try:
            k = self.position[a]
        except KeyError:
            raise ValueError(f"mode {a} lies outside the cutoff {self.cutoff}") from None
        return k if delta == 1 else k + len(self.modes)

    def codes(self, delta: int) -> list:
        return [encode(LatticeIndex(delta, a)) for a in self.modes]

    def all_codes(self) -> list:
        return self.codes(1) + self.codes(-1)


def weight_sum(dim: int, cutoff: int, power: float) -> float:
    """``sum_{|a|_inf <= cutoff} <a>^(-power)``."""
    box = ModeBox(dim, cutoff)
    return float(np.sum(box.weights ** (-power)))


def convolution_sum(j: LatticeIndex, cutoff: int) -> float:
    """Sum over ``M(j1, j2, j) = 0`` with ``j1, j2`` in the box of
    ``<j>^(d+1) / (<j1>^(d+1) <j2>^(d+1))``."""
    j = as_index(j)
    d = len(j.a)
    box = ModeBox(d, cutoff)
    p = d + 1
    wj = weight(j) ** p
    inv = box.weights ** (-p)
    total = 0.0
    target = np.array(j.a) * j.delta
    for d1 in (1, -1):
        for d2 in (1, -1):
            # d1 a1 + d2 a2 + delta a = 0  =>  a2 = -d2 (d1 a1 + delta a)
            a2 = -d2 * (d1 * box.mode_array + target)
            inside = np.all(np.abs(a2) <= cutoff, axis=1)
            idx = [box.position[tuple(x)] for x in a2[inside]]
            total += float(np.sum(inv[inside] * inv[idx]))
    return wj * total
