"""Linear frequencies, small divisors and non-resonance scans."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement, islice
from pathlib import Path
from typing import Mapping

import numpy as np

from .lattice import (
    IndexTuple,
    LatticeIndex,
    ModeBox,
    code_info,
    is_action_resonant,
    is_super_action_resonant,
    momentum,
    mode_weight,
    weight_ratio,
)
from .polynomial import HomogeneousPolynomial, mode_box
from .lattice import encode


def _mode_key(a) -> tuple:
    if isinstance(a, (int, np.integer)):
        return (int(a),)
    return tuple(int(x) for x in a)


@dataclass(frozen=True, eq=False)
class FrequencyModel:
    """A map ``a -> omega_a``.

    ``kind`` is one of ``"nlw"`` (``sqrt(a^2 + m)`` in one dimension),
    ``"nls"`` (``|a|^2 + v_a / <a>^m`` with a finite potential table) or
    ``"custom"`` (explicit table).
    """

    kind: str
    dim: int
    mass: float | None = None
    decay: float | None = None
    potential: Mapping = field(default_factory=dict)
    table: Mapping = field(default_factory=dict)
    cutoff: int | None = None

    def __post_init__(self):
        if self.kind == "nlw":
            if self.dim != 1:
                raise ValueError("the wave model lives in dimension 1")
            if self.mass is None or not 1.0 <= self.mass <= 2.0:
                raise ValueError(f"mass must lie in [1, 2], got {self.mass}")
        elif self.kind == "nls":
            if self.decay is None or self.decay <= self.dim / 2:
                raise ValueError(f"decay must exceed d/2 = {self.dim / 2}")
            for a, v in self.potential.items():
                if not -0.5 <= v <= 0.5:
                    raise ValueError(f"potential value {v} at {a} outside [-1/2, 1/2]")
        elif self.kind == "custom":
            if not self.table:
                raise ValueError("a custom model needs a frequency table")
        else:
            raise ValueError(f"unknown frequency model kind {self.kind!r}")

    # -- constructors --------------------------------------------------------

    @classmethod
    def nlw(cls, mass: float) -> "FrequencyModel":
        return cls("nlw", 1, mass=float(mass))

    @classmethod
    def nls(cls, dim: int, decay: float, potential: Mapping, cutoff: int | None = None):
        pot = {_mode_key(a): float(v) for a, v in potential.items()}
        if cutoff is None:
            cutoff = max((max(abs(x) for x in a) for a in pot), default=0)
        return cls("nls", int(dim), decay=float(decay), potential=pot, cutoff=int(cutoff))

    @classmethod
    def custom(cls, dim: int, table: Mapping) -> "FrequencyModel":
        tab = {_mode_key(a): float(v) for a, v in table.items()}
        return cls("custom", int(dim), table=tab)

    def __repr__(self):
        if self.kind == "nlw":
            return f"FrequencyModel(nlw, m={self.mass})"
        if self.kind == "nls":
            return f"FrequencyModel(nls, d={self.dim}, decay={self.decay}, cutoff={self.cutoff})"
        return f"FrequencyModel(custom, d={self.dim}, modes={len(self.table)})"

    # -- evaluation ------------------------------------------------------------

    def frequency(self, a) -> float:
        a = _mode_key(a)
        if len(a) != self.dim:
            raise ValueError("mode dimension mismatch")
        sq = sum(x * x for x in a)
        if self.kind == "nlw":
            return math.sqrt(sq + self.mass)
        if self.kind == "nls":
            if a not in self.potential:
                raise ValueError(f"mode {a} has no potential value (outside the table)")
            return sq + self.potential[a] / mode_weight(a) ** self.decay
        try:
            return self.table[a]
        except KeyError:
            raise ValueError(f"mode {a} missing from the frequency table") from None

    def on_box(self, box: ModeBox) -> np.ndarray:
        return np.array([self.frequency(a) for a in box.modes])

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "d": self.dim}
        if self.kind == "nlw":
            out["m"] = self.mass
        elif self.kind == "nls":
            out["decay"] = self.decay
            out["cutoff"] = self.cutoff
            out["v"] = [{"a": list(a), "v": v} for a, v in sorted(self.potential.items())]
        else:
            out["table"] = [{"a": list(a), "omega": w} for a, w in sorted(self.table.items())]
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "FrequencyModel":
        kind = data["kind"].lower()
        if kind == "nlw":
            return cls.nlw(data["m"])
        if kind == "nls":
            pot = {tuple(e["a"]): e["v"] for e in data["v"]}
            return cls.nls(int(data["d"]), data["decay"], pot, data.get("cutoff"))
        if kind == "custom":
            tab = {tuple(e["a"]): e["omega"] for e in data["table"]}
            return cls.custom(int(data["d"]), tab)
        raise ValueError(f"unknown frequency model kind {kind!r}")


def frequency(model: FrequencyModel, a) -> float:
    return model.frequency(a)


def save_model(model: FrequencyModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2, sort_keys=True))


def load_model(path) -> FrequencyModel:
    return FrequencyModel.from_dict(json.loads(Path(path).read_text()))


def random_potential(dim: int, cutoff: int, rng: np.random.Generator) -> dict:
    """Independent uniform values on [-1/2, 1/2] for every mode of the box."""
    box = mode_box(dim, cutoff)
    vals = rng.uniform(-0.5, 0.5, size=len(box))
    return dict(zip(box.modes, vals.tolist()))


def linear_hamiltonian(model: FrequencyModel, box: ModeBox) -> HomogeneousPolynomial:
    """``H0 = sum_a omega_a xi_a conj(xi_a)`` over the modes of ``box``."""
    terms = {}
    for a in box.modes:
        key = (encode(LatticeIndex(1, a)), encode(LatticeIndex(-1, a)))
        terms[key] = model.frequency(a)
    return HomogeneousPolynomial(2, box.dim, terms)


# ---------------------------------------------------------------------------
# small divisors
# ---------------------------------------------------------------------------

def _as_tuple(t) -> IndexTuple:
    return t if isinstance(t, IndexTuple) else IndexTuple(t)


def signed_sum(model: FrequencyModel, t) -> float:
    """``delta_1 omega_{a_1} + ... + delta_l omega_{a_l}`` (with sign)."""
    return math.fsum(j.delta * model.frequency(j.a) for j in _as_tuple(t).entries)


def small_divisor(model: FrequencyModel, t) -> float:
    return abs(signed_sum(model, t))


def key_signed_sum(model: FrequencyModel, key, dim: int, cache: dict | None = None) -> float:
    """Signed frequency sum for a canonical code key."""
    total = []
    for v in key:
        if cache is not None and v in cache:
            total.append(cache[v])
            continue
        delta, a, _, _ = code_info(v, dim)
        w = delta * model.frequency(a)
        if cache is not None:
            cache[v] = w
        total.append(w)
    return math.fsum(total)


def threshold(t, gamma: float, tau: float) -> float:
    """``gamma * (j1* / (<M> j2* ... jl*))^tau``."""
    if gamma < 0 or tau < 0:
        raise ValueError("gamma and tau must be non-negative")
    if tau == 0:
        return float(gamma)
    return gamma * weight_ratio(_as_tuple(t)) ** tau


def key_log_ratio(key, dim: int) -> float:
    """``log(j1* / (<M> j2* ... jl*))`` for a canonical code key."""
    mom = [0] * dim
    logs = []
    for v in key:
        delta, a, _, w = code_info(v, dim)
        logs.append(math.log(w))
        for i in range(dim):
            mom[i] += delta * a[i]
    top = max(logs)
    return 2 * top - sum(logs) - math.log(mode_weight(tuple(mom)))


# ---------------------------------------------------------------------------
# tuple enumeration over a finite box
# ---------------------------------------------------------------------------

def multiset_rows(n_slots: int, length: int, chunk: int = 250_000):
    """Yield arrays of non-decreasing slot tuples (all multisets), in chunks."""
    it = combinations_with_replacement(range(n_slots), length)
    while True:
        block = list(islice(it, chunk))
        if not block:
            return
        yield np.array(block, dtype=np.int64).reshape(len(block), length)


class SlotTables:
    """Per-slot data for the doubled variable list ``[(+1, a)..., (-1, a)...]``."""

    def __init__(self, box: ModeBox):
        self.box = box
        n = len(box)
        self.n_modes = n
        self.sign = np.concatenate([np.ones(n), -np.ones(n)])
        self.log_weight = np.log(np.concatenate([box.weights, box.weights]))
        self.mom = np.vstack([box.mode_array, -box.mode_array])
        self.sq = box.sq_norms
        self.mode_pos = np.arange(n)

    def log_ratio(self, rows: np.ndarray) -> np.ndarray:
        lw = self.log_weight[rows]
        mom = self.mom[rows].sum(axis=1)
        log_m = np.log1p(np.sqrt((mom ** 2).sum(axis=1).astype(float)))
        return 2 * lw.max(axis=1) - lw.sum(axis=1) - log_m

    def momenta(self, rows: np.ndarray) -> np.ndarray:
        return self.mom[rows].sum(axis=1)

    def resonant_mask(self, rows: np.ndarray, resonant_class: str) -> np.ndarray:
        """Exact class membership (J: by |a|^2, I: by a) for sorted slot rows."""
        n = self.n_modes
        L = rows.shape[1]
        out = np.zeros(rows.shape[0], dtype=bool)
        if L % 2:
            return out
        h = L // 2
        plus = (rows < n).sum(axis=1)
        cand = plus == h
        if not cand.any():
            return out
        sub = rows[cand]
        key = self.sq if resonant_class == "J" else self.mode_pos
        kp = np.sort(key[sub[:, :h]], axis=1)
        km = np.sort(key[sub[:, h:] - n], axis=1)
        out[np.flatnonzero(cand)] = np.all(kp == km, axis=1)
        return out

    def to_tuple(self, row) -> IndexTuple:
        n = self.n_modes
        entries = [LatticeIndex(1 if s < n else -1, self.box.modes[s % n]) for s in row]
        return IndexTuple(entries)


def _check_class(resonant_class: str) -> str:
    c = resonant_class.upper()
    if c not in ("J", "I"):
        raise ValueError("resonant class must be 'J' (super-actions) or 'I' (actions)")
    return c


def check_nonresonant_up_to_order(model: FrequencyModel, r: int, gamma: float, tau: float,
                                  cutoff: int, resonant_class: str = "J",
                                  momenta=None, min_length: int = 1) -> list:
    """All tuples of length ``min_length..r`` violating the divisor bound.

    Tuples range over multisets of signed modes with ``|a|_inf <= cutoff``;
    members of the chosen resonant class are skipped.  ``momenta`` (an
    iterable of integer vectors) optionally restricts the scan to those
    momentum classes.  Returns ``(IndexTuple, divisor, threshold)`` triples.
    """
    cls = _check_class(resonant_class)
    if gamma <= 0:
        return []
    box = mode_box(model.dim, cutoff)
    tables = SlotTables(box)
    signed = tables.sign * np.concatenate([model.on_box(box)] * 2)
    allowed = None
    if momenta is not None:
        allowed = {tuple(int(x) for x in np.atleast_1d(m)) for m in momenta}
    log_gamma = math.log(gamma)
    found = []
    for length in range(min_length, r + 1):
        for rows in multiset_rows(2 * len(box), length):
            div = np.abs(signed[rows].sum(axis=1))
            log_thr = log_gamma + tau * tables.log_ratio(rows)
            with np.errstate(divide="ignore"):
                hit = np.log(div) < log_thr
            if not hit.any():
                continue
            sub = rows[hit]
            res = tables.resonant_mask(sub, cls)
            for row, is_res, dv, lt in zip(sub, res, div[hit], log_thr[hit]):
                if is_res:
                    continue
                if allowed is not None:
                    mom = tuple(int(x) for x in tables.momenta(row[None, :])[0])
                    if mom not in allowed:
                        continue
                found.append((tables.to_tuple(row), float(dv), float(math.exp(lt))))
    return found


def check_nlw_gap_bounds(m: float, cutoff: int = 200) -> bool:
    """Frequency-gap inequalities for the wave model over ``0 <= b < a <= cutoff``.

    * ``omega_0^-2 - omega_1^-2 >= 1/6``
    * ``omega_0^-2 - omega_a^-2 >= 1/3`` for ``a >= 2``
    * ``omega_b^-2 - omega_a^-2 > <b>^-3`` for ``a > b >= 1``

    Differences are formed as ``(a^2 - b^2) / ((a^2 + m)(b^2 + m))`` so that
    the boundary case ``m = 2`` of the first inequality is not lost to
    cancellation.
    """
    if not 1.0 <= m <= 2.0:
        raise ValueError("mass must lie in [1, 2]")

    def gap(b, a):
        return (a * a - b * b) / ((a * a + m) * (b * b + m))

    if not gap(0, 1) >= 1.0 / 6.0:
        return False
    a = np.arange(2, cutoff + 1, dtype=float)
    if not np.all((a * a) / ((a * a + m) * m) >= 1.0 / 3.0):
        return False
    for b in range(1, cutoff):
        aa = np.arange(b + 1, cutoff + 1, dtype=float)
        g = (aa * aa - b * b) / ((aa * aa + m) * (b * b + m))
        if not np.all(g > (1.0 + b) ** -3):
            return False
    return True


__all__ = [
    "FrequencyModel", "frequency", "small_divisor", "signed_sum", "threshold",
    "check_nonresonant_up_to_order", "check_nlw_gap_bounds", "linear_hamiltonian",
    "random_potential", "save_model", "load_model", "multiset_rows", "SlotTables",
    "is_super_action_resonant", "is_action_resonant", "momentum",
]
