"""Perturbation families for the wave and Schroedinger models.

The nonlinearity is given as Fourier tables, one per power of the field:

* wave model: ``F(x, u) = sum_n F_n(x) u^n`` with ``u = sum_a (xi_a e^{iax} +
  conj(xi_a) e^{-iax}) / sqrt(2 omega_a)``;
* Schroedinger model: ``G(x, u, ubar) = sum g(x) u^p ubar^q`` with
  ``u = sum_a xi_a e^{ia.x}``.

Averaging over the torus keeps exactly the tuples whose momentum ``b``
matches a Fourier mode of the coefficient (``F_n^(-b)``), which is how the
tables are consumed below.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .frequencies import FrequencyModel, SlotTables, multiset_rows
from .lattice import orbit_size
from .polynomial import HomogeneousPolynomial, PolynomialFamily, family_norm, mode_box


@dataclass
class OrderTable:
    """Fourier table of the coefficient of one power of the field.

    ``plus`` is the number of ``u`` factors for the Schroedinger model (the
    remaining ``n - plus`` are ``ubar``); it is ignored for the wave model.
    """

    n: int
    fourier: dict
    plus: int | None = None

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("perturbation orders start at 3")
        self.fourier = {(int(b),) if isinstance(b, (int, np.integer)) else tuple(int(x) for x in b):
                        complex(v) for b, v in self.fourier.items()}
        if self.plus is not None and not 0 <= self.plus <= self.n:
            raise ValueError("plus count must lie between 0 and n")


@dataclass
class NonlinearitySpec:
    kind: str
    orders: list = field(default_factory=list)
    cutoff: int | None = None
    dim: int = 1

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in ("nlw", "nls"):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        for t in self.orders:
            for b in t.fourier:
                if len(b) != self.dim:
                    raise ValueError("Fourier mode dimension mismatch")
        if self.kind == "nls":
            for t in self.orders:
                if t.plus is None:
                    if t.n % 2:
                        raise ValueError("odd Schroedinger order needs an explicit plus count")
                    t.plus = t.n // 2

    @property
    def max_order(self) -> int:
        return max((t.n for t in self.orders), default=0)

    def is_real(self, tol: float = 1e-14) -> bool:
        """Conjugate symmetry ``F^(-b) = conj(F^(b))`` of every wave table."""
        for t in self.orders:
            for b, v in t.fourier.items():
                mb = tuple(-x for x in b)
                if abs(t.fourier.get(mb, 0j) - v.conjugate()) > tol * max(1.0, abs(v)):
                    return False
        return True

    def to_dict(self) -> dict:
        orders = []
        for t in self.orders:
            entry = {"n": t.n, "fourier": [
                {"b": list(b) if self.dim > 1 else b[0], "re": v.real, "im": v.imag}
                for b, v in sorted(t.fourier.items())]}
            if self.kind == "nls":
                entry["plus"] = t.plus
            orders.append(entry)
        return {"kind": self.kind, "d": self.dim, "cutoff": self.cutoff, "orders": orders}

    @classmethod
    def from_dict(cls, data: Mapping) -> "NonlinearitySpec":
        orders = []
        for o in data["orders"]:
            four = {}
            for e in o["fourier"]:
                b = e["b"]
                b = (int(b),) if isinstance(b, (int, float)) else tuple(int(x) for x in b)
                four[b] = complex(float(e.get("re", 0.0)), float(e.get("im", 0.0)))
            orders.append(OrderTable(int(o["n"]), four, o.get("plus")))
        return cls(data["kind"], orders, data.get("cutoff"), int(data.get("d", 1)))


def save_spec(spec: NonlinearitySpec, path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True))


def load_spec(path) -> NonlinearitySpec:
    return NonlinearitySpec.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# table helpers
# ---------------------------------------------------------------------------

def monomial_spec(kind: str, n: int, coefficient: complex = 1.0, dim: int = 1,
                  plus: int | None = None) -> NonlinearitySpec:
    """x-independent nonlinearity ``coefficient * u^n`` (or ``u^p ubar^q``)."""
    zero = (0,) * dim
    return NonlinearitySpec(kind, [OrderTable(n, {zero: coefficient}, plus)], cutoff=0, dim=dim)


def analytic_spec(kind: str, amplitudes: Mapping, mu: float, band: int, dim: int = 1,
                  plus: Mapping | None = None) -> NonlinearitySpec:
    """Banded profile ``F_n^(b) = amplitudes[n] * exp(-mu |b|)`` for ``|b|_inf <= band``."""
    box = mode_box(dim, band)
    orders = []
    for n, amp in sorted(amplitudes.items()):
        table = {a: amp * math.exp(-mu * math.sqrt(sum(x * x for x in a))) for a in box.modes}
        orders.append(OrderTable(int(n), table, None if plus is None else plus.get(n)))
    return NonlinearitySpec(kind, orders, cutoff=band, dim=dim)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _rows_with_momentum(tables: SlotTables, n: int, targets: Mapping):
    """Sorted slot rows of length ``n`` whose momentum is a key of ``targets``."""
    target_list = list(targets)
    tarr = np.array(target_list, dtype=np.int64).reshape(len(target_list), -1)
    for rows in multiset_rows(2 * tables.n_modes, n):
        mom = tables.momenta(rows)
        # match each row's momentum against the (small) list of targets
        eq = np.all(mom[:, None, :] == tarr[None, :, :], axis=2)
        hit = eq.any(axis=1)
        if hit.any():
            for row, k in zip(rows[hit], eq[hit].argmax(axis=1)):
                yield row, target_list[k]


def _row_key(row, codes):
    return tuple(codes[s] for s in row)


def build_nlw(spec: NonlinearitySpec, mass: float, cutoff: int, max_order: int | None = None):
    """Wave-model perturbation ``P = sum_n P_n`` on modes ``|a| <= cutoff``.

    Each ordered tuple ``j`` of length ``n`` and momentum ``b`` carries the
    symmetric coefficient ``F_n^(-b) / (sqrt(2)^n sqrt(omega_a1 ... omega_an))``.
    """
    if spec.kind != "nlw":
        raise ValueError("build_nlw needs a wave-model nonlinearity")
    model = FrequencyModel.nlw(mass)
    box = mode_box(1, cutoff)
    tables = SlotTables(box)
    omega = model.on_box(box)
    log_w = -0.5 * np.log(np.concatenate([omega, omega]))
    codes = box.all_codes()
    max_order = spec.max_order if max_order is None else max_order
    parts = []
    for t in spec.orders:
        if t.n > max_order:
            continue
        targets = {tuple(-x for x in b): v for b, v in t.fourier.items() if v != 0}
        if not targets:
            continue
        terms = {}
        for row, mom in _rows_with_momentum(tables, t.n, targets):
            key = _row_key(row, codes)
            ftilde = targets[mom] * 2.0 ** (-t.n / 2) * math.exp(float(log_w[row].sum()))
            terms[key] = terms.get(key, 0j) + orbit_size(key) * ftilde
        parts.append(HomogeneousPolynomial(t.n, 1, terms))
    present = {t.n for t in spec.orders}
    for n in range(3, max_order + 1):
        if n not in present:
            warnings.warn(f"no Fourier table for order {n}; order skipped", stacklevel=2)
    return PolynomialFamily(parts, order_cap=max(max_order, 3), dim=1)


def _split_multiplicity(row, n_modes):
    """``(p!/prod m_plus!) * (q!/prod m_minus!)`` for a sorted slot row."""
    plus = [s for s in row if s < n_modes]
    minus = [s for s in row if s >= n_modes]
    return orbit_size(plus) * orbit_size(minus)


def build_nls(spec: NonlinearitySpec, cutoff: int, max_order: int | None = None):
    """Schroedinger-model perturbation on modes ``|a|_inf <= cutoff``.

    The term ``g(x) u^p ubar^q`` averages to a sum over tuples with ``p``
    entries of sign +1 and ``q`` of sign -1, momentum ``b``, and weight
    ``g^(-b)`` per ordered placement of the + and - factors.
    """
    if spec.kind != "nls":
        raise ValueError("build_nls needs a Schroedinger-model nonlinearity")
    box = mode_box(spec.dim, cutoff)
    tables = SlotTables(box)
    n_modes = len(box)
    codes = box.all_codes()
    max_order = spec.max_order if max_order is None else max_order
    acc = {}
    for t in spec.orders:
        if t.n > max_order:
            continue
        targets = {tuple(-x for x in b): v for b, v in t.fourier.items() if v != 0}
        if not targets:
            continue
        terms = acc.setdefault(t.n, {})
        for row, mom in _rows_with_momentum(tables, t.n, targets):
            if int((row < n_modes).sum()) != t.plus:
                continue
            key = _row_key(row, codes)
            terms[key] = terms.get(key, 0j) + _split_multiplicity(row, n_modes) * targets[mom]
    parts = [HomogeneousPolynomial(n, spec.dim, terms) for n, terms in acc.items()]
    return PolynomialFamily(parts, order_cap=max(max_order, 3), dim=spec.dim)


def estimate_C_N(F: PolynomialFamily, N: float, R_prime: float, R_grid=None) -> float:
    """Smallest slope ``C`` with ``<|F|>_{0,N}^R <= C R`` on the grid ``R <= R'``."""
    if R_grid is None:
        R_grid = np.linspace(R_prime / 64, R_prime, 64)
    R_grid = [float(R) for R in R_grid if 0 < R <= R_prime * (1 + 1e-12)]
    if not R_grid:
        raise ValueError("the R grid must contain values in (0, R']")
    return max(family_norm(F, 0.0, N, R) / R for R in R_grid)


def analytic_growth_constant(spec: NonlinearitySpec, mu: float, R_prime: float) -> float:
    """Prefactor ``C'`` of the analytic-class growth law ``C'((N+2)/(e mu))^(N+2)``.

    With ``|F_n^(b)| <= C'' exp(-mu|b|) / R'^n`` the prefactor is
    ``3 C'' e^mu / (2 (sqrt 2 - 1) R'^3)``.
    """
    cpp = 0.0
    for t in spec.orders:
        for b, v in t.fourier.items():
            nb = math.sqrt(sum(x * x for x in b))
            cpp = max(cpp, abs(v) * R_prime ** t.n * math.exp(mu * nb))
    return 3 * cpp * math.exp(mu) / (2 * (math.sqrt(2) - 1) * R_prime ** 3)


def decay_constant(spec: NonlinearitySpec, N: float, R_prime: float) -> float:
    """Smallest ``C~`` with ``|F_n^(b)| <= C~ <b>^(-N-2) / R'^n`` on the table."""
    out = 0.0
    for t in spec.orders:
        for b, v in t.fourier.items():
            wb = 1.0 + math.sqrt(sum(x * x for x in b))
            out = max(out, abs(v) * R_prime ** t.n * wb ** (N + 2))
    return out
