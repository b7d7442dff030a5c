"""Homological equation, Lie transforms and the r-step normal-form iteration.

Sign conventions
----------------
With the bracket of :func:`torus_bnf.polynomial.poisson_bracket` one has
``{H0, z_j} = +i Omega_j z_j`` where ``Omega_j = sum_k delta_k omega_{a_k}``.
The generator is therefore ``chi_j = f_j / (i Omega_j)``, which makes
``{H0, chi} + Z = f`` hold coefficient by coefficient.

The Lie transform of a generator acts on functions by
``f -> sum_k ad_chi^k f / k!`` with ``ad_chi f = {chi, f}``.  As a map of
phase space this is the time-one flow of the vector field of ``-chi``
(equivalently the flow of ``X_chi`` run backwards), which is what
:func:`transform_state` integrates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import kernels
from .frequencies import FrequencyModel, key_signed_sum, linear_hamiltonian
from .lattice import code_info, mode_weight
from .polynomial import (
    PRUNE_THRESHOLD,
    HomogeneousPolynomial,
    PolynomialFamily,
    StateVector,
    family_norm,
    mode_box,
    poisson_bracket,
    sn_norm,
    sobolev_norm,
)


class NormalFormError(RuntimeError):
    """Raised when the iteration produces non-finite coefficients."""


class TransformEscape(RuntimeError):
    """Raised when a generator flow leaves the requested ball."""


def rho_constant(d: int) -> float:
    """``2^(d+4) 3^d``."""
    if d < 1:
        raise ValueError("d must be at least 1")
    return float(2 ** (d + 4) * 3 ** d)


@dataclass
class NormalFormConfig:
    """Parameters of the normal-form iteration.

    ``N`` defaults to the smallest value admitted by the certificate,
    ``s0 + r tau + (d + 1)``.  ``C_N`` may be left as ``None`` to have it
    estimated from the perturbation.  ``R_cert`` is the radius at which the
    theorem-level certificate rows are evaluated (default ``R_* / 2``).
    """

    r: int
    gamma: float
    tau: float
    s0: float = 0.0
    N: float | None = None
    R_prime: float = 1.0
    C_N: float | None = None
    order_cap: int | None = None
    d: int = 1
    cutoff: int = 8
    certify: bool = True
    R_cert: float | None = None
    cleanup: float = PRUNE_THRESHOLD

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be at least 1")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if self.order_cap is None:
            self.order_cap = self.r + 4
        if self.order_cap < self.r + 3:
            raise ValueError(f"order_cap must be at least r+3 = {self.r + 3}")
        window = self.s0 + self.r * self.tau + (self.d + 1)
        if self.N is None:
            self.N = window
        if self.certify and self.N < window - 1e-12:
            raise ValueError(f"certificate mode needs N >= s0 + r*tau + d + 1 = {window}")
        if self.N < self.s0:
            raise ValueError("N must be at least s0")
        if self.R_prime <= 0:
            raise ValueError("R' must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def r_star(cfg: NormalFormConfig, C_N: float | None = None) -> float:
    """``min(R'/2, gamma / (10 rho r^4 C_N))``."""
    C = cfg.C_N if C_N is None else C_N
    if C is None:
        raise ValueError("C_N is not set")
    if C <= 0:
        return cfg.R_prime / 2
    return min(cfg.R_prime / 2, cfg.gamma / (10 * rho_constant(cfg.d) * cfg.r ** 4 * C))


# ---------------------------------------------------------------------------
# homological equation
# ---------------------------------------------------------------------------

def key_threshold(key, dim: int, gamma: float, tau: float) -> float:
    """``gamma (j1* / (<M> j2* ... jl*))^tau`` for a canonical code key."""
    if tau == 0:
        return gamma
    mom = [0] * dim
    ws = []
    for v in key:
        delta, a, _, w = code_info(v, dim)
        ws.append(w)
        for i in range(dim):
            mom[i] += delta * a[i]
    ws.sort(reverse=True)
    denom = mode_weight(tuple(mom))
    for w in ws[1:]:
        denom *= w
    return gamma * (ws[0] / denom) ** tau


def solve_homological(f: HomogeneousPolynomial, freq: FrequencyModel, gamma: float,
                      tau: float):
    """Split ``f`` into a generator ``chi`` and a normal part ``Z``.

    A monomial whose divisor ``|Omega|`` reaches the threshold (ties included)
    goes to ``chi`` with coefficient ``f_j / (i Omega)``; every other monomial
    stays in ``Z``.  A zero divisor always stays in ``Z``.
    """
    chi, Z = {}, {}
    cache = {}
    for key, c in f.raw_items():
        omega = key_signed_sum(freq, key, f.dim, cache)
        if omega != 0.0 and abs(omega) >= key_threshold(key, f.dim, gamma, tau):
            chi[key] = c / (1j * omega)
        else:
            Z[key] = c
    return (HomogeneousPolynomial(f.order, f.dim, chi),
            HomogeneousPolynomial(f.order, f.dim, Z))


def is_below_threshold(key, dim, freq, gamma, tau) -> bool:
    """Whether a monomial key is in normal form (strictly below its threshold)."""
    omega = key_signed_sum(freq, key, dim)
    return abs(omega) < key_threshold(key, dim, gamma, tau) or omega == 0.0


# ---------------------------------------------------------------------------
# Lie transforms
# ---------------------------------------------------------------------------

def _lie_chain(chi, g, order_cap, first_weight, cleanup):
    """Terms ``c_k ad_chi^k g`` for k >= 1 whose order stays within the cap.

    ``first_weight(k)`` is the ratio ``c_k / c_{k-1}``.  Returns the list of
    terms and whether a non-zero term was cut off.
    """
    out = []
    step = chi.order - 2
    term = g
    k = 0
    while True:
        if term.order + step > order_cap:
            return out, not term.is_zero()
        k += 1
        term = poisson_bracket(chi, term, cleanup=cleanup).scale(first_weight(k))
        if term.is_zero():
            return out, False
        if not all(math.isfinite(abs(c)) for _, c in term.raw_items()):
            raise NormalFormError(f"non-finite coefficients at order {term.order}")
        out.append(term)


def lie_transform(F: PolynomialFamily, chi: HomogeneousPolynomial, order_cap: int,
                  h0: HomogeneousPolynomial | None = None,
                  cleanup: float = PRUNE_THRESHOLD) -> PolynomialFamily:
    """``sum_k ad_chi^k f / k!`` for every part of ``F``, truncated at ``order_cap``.

    When a quadratic ``h0`` is supplied its images ``ad_chi^k h0 / k!`` with
    ``k >= 1`` are added as well (``h0`` itself is not part of the output).
    """
    if chi.order < 3:
        raise ValueError("the generator must have order at least 3")
    kept = {o: p for o, p in F.parts.items() if o <= order_cap}
    dropped = F.tail_dropped or any(o > order_cap for o in F.parts)
    out = PolynomialFamily(kept, order_cap, dropped, dim=F.dim or chi.dim)
    if chi.is_zero():
        return out
    sources = list(kept.values())
    if h0 is not None:
        sources.append(h0)
    extra = []
    for g in sources:
        terms, cut = _lie_chain(chi, g, order_cap, lambda k: 1.0 / k, cleanup)
        extra.extend(terms)
        dropped = dropped or cut
    return out + PolynomialFamily(extra, order_cap, dropped, dim=out.dim)


# ---------------------------------------------------------------------------
# iteration
# ---------------------------------------------------------------------------

@dataclass
class CertificateRow:
    name: str
    step: int
    lhs: float
    rhs: float
    radius: float | None = None

    @property
    def verified(self) -> bool:
        return bool(self.lhs <= self.rhs * (1 + 1e-12))

    def to_dict(self) -> dict:
        return {"name": self.name, "step": self.step, "lhs": self.lhs, "rhs": self.rhs,
                "radius": self.radius, "verified": self.verified}


@dataclass
class Certificate:
    rows: list = field(default_factory=list)
    C_N: float = 0.0
    C_N_source: str = "supplied"
    R: float = 0.0
    R_star: float = 0.0
    label: str = "verified-at-cutoff"

    @property
    def verified(self) -> bool:
        return all(row.verified for row in self.rows)

    def failed(self) -> list:
        return [row for row in self.rows if not row.verified]

    def to_dict(self) -> dict:
        return {"label": self.label, "C_N": self.C_N, "C_N_source": self.C_N_source,
                "R": self.R, "R_star": self.R_star, "verified": self.verified,
                "rows": [row.to_dict() for row in self.rows]}


@dataclass
class NormalFormState:
    """Normal part and remainder after ``step`` iterations."""

    step: int
    Z: PolynomialFamily
    R: PolynomialFamily
    generators: list = field(default_factory=list)


@dataclass
class NormalFormOutcome:
    generators: list
    Z: PolynomialFamily
    R: PolynomialFamily
    certificate: Certificate
    config: NormalFormConfig
    freq: FrequencyModel


def _step_radii(cfg, R, Rs, l):
    return R * (2 - l / cfg.r), R * (2 - (l - 1) / cfg.r), Rs * (2 - l / cfg.r)


def normal_form_step(state: NormalFormState, l: int, cfg: NormalFormConfig,
                     freq: FrequencyModel, certificate: Certificate | None = None):
    """One iteration: remove the non-resonant part of the order ``l+2`` terms."""
    if state.step != l - 1:
        raise ValueError(f"state is at step {state.step}, cannot run step {l}")
    low = state.R.min_order()
    if low is not None and low < l + 2:
        raise ValueError(f"remainder has a part of order {low} < {l + 2}")
    dim = cfg.d
    f = state.R[l + 2]
    chi, Zl = solve_homological(f, freq, cfg.gamma, cfg.tau)
    cap = cfg.order_cap
    Z_new = state.Z + PolynomialFamily([Zl], cap, dim=dim)
    rest = PolynomialFamily({o: p for o, p in state.R.parts.items() if o != l + 2},
                            cap, state.R.tail_dropped, dim=dim)
    extra = []
    dropped = state.R.tail_dropped
    if not chi.is_zero():
        # sum_{i>=1} ad^i (Z + R) / i!
        for g in list(state.Z) + list(state.R):
            terms, cut = _lie_chain(chi, g, cap, lambda k: 1.0 / k, cfg.cleanup)
            extra.extend(terms)
            dropped = dropped or cut
        # sum_{i>=2} ad^i H0 / i!  =  sum_{i>=1} ad^i (Z_l - f) / (i+1)!
        D = Zl - f
        if not D.is_zero():
            terms, cut = _lie_chain(chi, D, cap, lambda k: 1.0 / (k + 1), cfg.cleanup)
            extra.extend(terms)
            dropped = dropped or cut
    R_new = rest + PolynomialFamily(extra, cap, dropped, dim=dim)
    R_new = PolynomialFamily(R_new.parts, cap, dropped, dim=dim)
    if Z_new.parts and (min(Z_new.parts) < 3 or max(Z_new.parts) > l + 2):
        raise AssertionError("normal part left the order window")
    if R_new.parts and min(R_new.parts) < l + 3:
        raise AssertionError("remainder kept a low-order part")
    new_state = NormalFormState(l, Z_new, R_new, state.generators + [chi])

    if certificate is not None and cfg.certify:
        C, R, Rs = certificate.C_N, certificate.R, certificate.R_star
        Rl, Rl1, Rsl = _step_radii(cfg, R, Rs, l)
        s_prev = cfg.s0 + (l - 1) * cfg.tau
        s_l = cfg.s0 + l * cfg.tau
        f_norm = sn_norm(f, s_prev, cfg.N)
        chi_norm = sn_norm(chi, s_l, cfg.N)
        rows = certificate.rows
        rows.append(CertificateRow("generator_norm", l, chi_norm, f_norm / cfg.gamma))
        rows.append(CertificateRow("normal_part_norm", l, sn_norm(Zl, s_prev, cfg.N), f_norm))
        rows.append(CertificateRow("displacement", l, chi_norm * (Rl1 / 2) ** (l + 1),
                                   C * Rl1 ** 2 / (2 ** (l + 1) * cfg.gamma), Rl1))
        rows.append(CertificateRow("normal_form_growth", l, family_norm(Z_new, s_l, cfg.N, Rl),
                                   l * C * Rl, Rl))
        rows.append(CertificateRow("remainder_growth", l, family_norm(R_new, s_l, cfg.N, Rl),
                                   C * Rl * (Rl / Rsl) ** l, Rl))
    return new_state


def birkhoff_normal_form(P: PolynomialFamily, freq: FrequencyModel, cfg: NormalFormConfig,
                         progress=None) -> NormalFormOutcome:
    """Run ``cfg.r`` iterations starting from ``H0 + P``."""
    if P.parts and min(P.parts) < 3:
        raise ValueError("the perturbation must start at order 3")
    if P.dim is not None and P.dim != cfg.d:
        raise ValueError("perturbation dimension does not match the configuration")
    if freq.dim != cfg.d:
        raise ValueError("frequency model dimension does not match the configuration")
    cap = cfg.order_cap
    P_cap = P.with_cap(cap)
    C_source = "supplied"
    C = cfg.C_N
    if C is None:
        # slope of <|P|>_{s0,N}^R / R over R <= R' (increasing in R, max at R')
        C = family_norm(P, cfg.s0, cfg.N, cfg.R_prime) / cfg.R_prime if P.parts else 0.0
        C_source = "estimated"
    cert = Certificate(C_N=C, C_N_source=C_source)
    if C > 0:
        cert.R_star = r_star(cfg, C)
    else:
        cert.R_star = cfg.R_prime / 2
    cert.R = cfg.R_cert if cfg.R_cert is not None else cert.R_star / 2
    if cert.R > cert.R_star * (1 + 1e-12):
        raise ValueError("certificate radius must not exceed R_*")
    if cfg.certify and P.parts:
        cert.rows.append(CertificateRow("perturbation_premise", 0,
                                        family_norm(P, cfg.s0, cfg.N, cfg.R_prime),
                                        C * cfg.R_prime, cfg.R_prime))
    state = NormalFormState(0, PolynomialFamily((), cap, dim=cfg.d),
                            PolynomialFamily(P_cap.parts, cap, P_cap.tail_dropped, dim=cfg.d))
    for l in range(1, cfg.r + 1):
        state = normal_form_step(state, l, cfg, freq, cert)
        if progress is not None:
            progress(l, state)
    if cfg.certify:
        s_r = cfg.s0 + cfg.r * cfg.tau
        R, Rs = cert.R, cert.R_star
        disp = [row for row in cert.rows if row.name == "displacement"]
        cert.rows.append(CertificateRow("total_displacement", cfg.r,
                                        sum(row.lhs for row in disp),
                                        2 * C * R ** 2 / cfg.gamma, R))
        cert.rows.append(CertificateRow("normal_form_total", cfg.r,
                                        family_norm(state.Z, s_r, cfg.N, R), cfg.r * C * R, R))
        cert.rows.append(CertificateRow("remainder_total", cfg.r,
                                        family_norm(state.R, s_r, cfg.N, R),
                                        C * R ** (cfg.r + 1) / Rs ** cfg.r, R))
    return NormalFormOutcome(state.generators, state.Z, state.R, cert, cfg, freq)


def recompose(P: PolynomialFamily, freq: FrequencyModel, generators, order_cap: int,
              cutoff: int, cleanup: float = PRUNE_THRESHOLD) -> PolynomialFamily:
    """Push ``H0 + P`` through every generator with explicit ``H0`` brackets.

    Returns the non-quadratic part of the transformed Hamiltonian.  This
    route never uses the homological identity, so it serves as an
    independent check of :func:`birkhoff_normal_form`.
    """
    box = mode_box(freq.dim, cutoff)
    h0 = linear_hamiltonian(freq, box)
    F = P.with_cap(order_cap)
    for chi in generators:
        F = lie_transform(F, chi, order_cap, h0=h0, cleanup=cleanup)
    return F


# ---------------------------------------------------------------------------
# phase-space action of the transformation
# ---------------------------------------------------------------------------

def transform_state(z: StateVector, generators, direction: str = "forward",
                    steps: int = 32, ball: float | None = None, s: float = 0.0) -> StateVector:
    """Apply ``phi`` (``"forward"``) or ``phi^-1`` (``"inverse"``) to a state.

    ``phi`` is the composition of the Lie transforms of the generators,
    ``phi = Phi_1 o ... o Phi_r``; each one is integrated with ``steps`` RK4
    steps per unit time.  With ``ball`` set, a :class:`TransformEscape` is
    raised when an intermediate state leaves ``||z||_s <= ball``.
    """
    if direction not in ("forward", "inverse"):
        raise ValueError("direction must be 'forward' or 'inverse'")
    box = z.box
    order = list(reversed(generators)) if direction == "forward" else list(generators)
    # Phi_chi is the flow of X_{-chi}; its inverse is the flow of X_chi
    sign = -1.0 if direction == "forward" else 1.0
    xi = z.xi.copy()
    for chi in order:
        if chi.is_zero():
            continue
        slots, coef = PolynomialFamily([chi], chi.order, dim=chi.dim).compiled(box)
        xi = kernels.rk4_flow(xi, slots, coef, 1.0 / steps, steps, sign)
        if ball is not None:
            nrm = sobolev_norm(StateVector(z.dim, z.cutoff, xi), s)
            if not nrm <= ball:
                raise TransformEscape(f"state norm {nrm:.3e} left the ball of radius {ball:.3e}")
    return StateVector(z.dim, z.cutoff, xi)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def outcome_to_dict(outcome: NormalFormOutcome) -> dict:
    from .polynomial import family_to_dict, polynomial_to_dict

    return {
        "config": outcome.config.to_dict(),
        "frequencies": outcome.freq.to_dict(),
        "generators": [polynomial_to_dict(chi) for chi in outcome.generators],
        "Z": family_to_dict(outcome.Z),
        "R": family_to_dict(outcome.R),
        "certificate": outcome.certificate.to_dict(),
    }


__all__ = [
    "NormalFormConfig", "NormalFormOutcome", "NormalFormState", "Certificate", "CertificateRow",
    "NormalFormError", "TransformEscape", "rho_constant", "r_star", "solve_homological",
    "lie_transform", "normal_form_step", "birkhoff_normal_form", "recompose",
    "transform_state", "outcome_to_dict", "key_threshold",
]
