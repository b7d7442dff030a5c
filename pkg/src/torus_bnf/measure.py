"""Monte Carlo estimates of the excluded (resonant) parameter sets.

For the wave model the parameter is the mass ``m`` in ``[1, 2]``; for the
Schroedinger model it is the potential table ``v_a`` with independent
uniform entries on ``[-1/2, 1/2]``.  Both parameter spaces have total
measure one, so the fraction of samples hitting some resonance zone
estimates the excluded measure directly.

Only tuples with every mode inside the cutoff are scanned, so the estimate
is a lower bound for the true excluded set and every comparison with the
closed-form bounds is one-sided.

Coupling: each sample records, for every tuple length, the smallest value
of ``log|Omega| - tau log(ratio)``.  A sample hits at level ``gamma`` exactly
when that margin is below ``log gamma``, so one scan serves every ``gamma``
and the hit fractions are monotone in ``gamma`` by construction.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .frequencies import FrequencyModel, SlotTables, multiset_rows, signed_sum
from .lattice import IndexTuple, decreasing_rearrangement, is_super_action_resonant
from .normal_form import rho_constant
from .polynomial import mode_box

LABEL = "one-sided: cutoff-visible estimate <= bound"


@dataclass
class MeasureReport:
    model: str
    samples: int
    gamma: float
    tau: float
    r: int
    cutoff: int
    hit_fraction: float
    closed_form_bound: float
    ci_half_width: float
    seed: int
    per_l: dict = field(default_factory=dict)
    d: int = 1
    decay: float | None = None
    label: str = LABEL

    @property
    def below_bound(self) -> bool:
        return self.hit_fraction <= self.closed_form_bound

    def to_dict(self) -> dict:
        out = asdict(self)
        out["per_l"] = {str(k): v for k, v in self.per_l.items()}
        out["below_bound"] = self.below_bound
        return out


# ---------------------------------------------------------------------------
# indicators and closed-form bounds
# ---------------------------------------------------------------------------

def _threshold(t: IndexTuple, gamma: float, tau: float) -> float:
    from .frequencies import threshold

    return threshold(t, gamma, tau)


def resonant_indicator_nlw(m: float, t, gamma: float, tau: float) -> bool:
    """Whether mass ``m`` lies in the resonance zone of tuple ``t``.

    Tuples of the super-action class are excluded from the union by
    definition and raise ``ValueError``.
    """
    t = t if isinstance(t, IndexTuple) else IndexTuple(t)
    if is_super_action_resonant(t):
        raise ValueError("tuple belongs to the super-action resonant class")
    if gamma <= 0:
        return False
    return abs(signed_sum(FrequencyModel.nlw(m), t)) < _threshold(t, gamma, tau)


def theta_bound_nlw(r: int, gamma: float) -> float:
    """``e^(12(r+2)) gamma^(1/(7(r+2)^2))``."""
    if gamma <= 0:
        return 0.0
    return math.exp(12 * (r + 2) + math.log(gamma) / (7 * (r + 2) ** 2))


def excluded_bound_nls(r: int, gamma: float, decay: float, d: int) -> float:
    """``rho^(r+3) gamma^(m/(m+2d))``."""
    if gamma <= 0:
        return 0.0
    return rho_constant(d) ** (r + 3) * gamma ** (decay / (decay + 2 * d))


def nlw_tuple_bound(t, gamma: float, tau: float) -> float:
    """Single-tuple measure bound for same-sign leading pairs.

    ``2^(3l+6) l^9 (j2*)^4 (prod_{k>=3} jk*)^(3l+2-tau/(3l)) gamma^(1/l)``,
    valid when the two largest entries carry the same sign and
    ``tau >= 9 l^2 + 30 l``.
    """
    t = t if isinstance(t, IndexTuple) else IndexTuple(t)
    l = len(t.entries)
    js = decreasing_rearrangement(t)
    tail = math.prod(js[2:]) if l > 2 else 1.0
    return (2.0 ** (3 * l + 6) * l ** 9 * js[1] ** 4 * tail ** (3 * l + 2 - tau / (3 * l))
            * gamma ** (1.0 / l))


def nls_tuple_bound(t, gamma: float, tau: float, decay: float) -> float:
    """``2 (jl*)^m gamma (j1* / (<M> j2* ... jl*))^tau``."""
    t = t if isinstance(t, IndexTuple) else IndexTuple(t)
    js = decreasing_rearrangement(t)
    return 2.0 * js[-1] ** decay * _threshold(t, gamma, tau)


def ci_half_width(p: float, n: int, z: float = 1.959963984540054) -> float:
    """Normal-approximation half-width of a 95% interval."""
    if n <= 0:
        return math.inf
    return z * math.sqrt(max(p * (1 - p), 0.0) / n)


# ---------------------------------------------------------------------------
# scanning
# ---------------------------------------------------------------------------

@dataclass
class TupleScan:
    """Non-resonant tuples of lengths ``3..r+2`` over one mode box."""

    slots: np.ndarray      # mode positions, padded rows grouped by length
    signs: np.ndarray
    log_factor: np.ndarray  # tau * log(ratio) per row
    group: np.ndarray       # length - 3
    n_groups: int
    n_modes: int


def build_scan(dim: int, cutoff: int, r: int, tau: float, resonant_class: str,
               momenta=None) -> TupleScan:
    """Collect every length-``l`` multiset outside the resonant class.

    Rows of different lengths are padded to ``r + 2`` columns with a dummy
    slot whose sign is zero, so a single kernel call handles all lengths.
    """
    box = mode_box(dim, cutoff)
    tables = SlotTables(box)
    n = len(box)
    width = r + 2
    allowed = None
    if momenta is not None:
        allowed = np.array([np.atleast_1d(m) for m in momenta], dtype=np.int64)
    slot_blocks, sign_blocks, fac_blocks, group_blocks = [], [], [], []
    for l in range(3, r + 3):
        for rows in multiset_rows(2 * n, l):
            keep = ~tables.resonant_mask(rows, resonant_class)
            if allowed is not None:
                mom = tables.momenta(rows)
                keep &= np.any(np.all(mom[:, None, :] == allowed[None], axis=2), axis=1)
            rows = rows[keep]
            if not len(rows):
                continue
            pos = np.zeros((len(rows), width), dtype=np.int64)
            sg = np.zeros((len(rows), width))
            pos[:, :l] = rows % n
            sg[:, :l] = tables.sign[rows]
            slot_blocks.append(pos)
            sign_blocks.append(sg)
            fac_blocks.append(tau * tables.log_ratio(rows))
            group_blocks.append(np.full(len(rows), l - 3, dtype=np.int64))
    if slot_blocks:
        return TupleScan(np.concatenate(slot_blocks), np.concatenate(sign_blocks),
                         np.concatenate(fac_blocks), np.concatenate(group_blocks), r, n)
    return TupleScan(np.zeros((0, width), dtype=np.int64), np.zeros((0, width)),
                     np.zeros(0), np.zeros(0, dtype=np.int64), r, n)


def scan_margins(scan: TupleScan, omega_samples: np.ndarray, chunk: int = 256) -> np.ndarray:
    """``(samples, r)`` array of per-length minimal log margins."""
    omega_samples = np.atleast_2d(omega_samples)
    out = np.empty((omega_samples.shape[0], scan.n_groups))
    for start in range(0, omega_samples.shape[0], chunk):
        block = omega_samples[start:start + chunk]
        out[start:start + len(block)] = kernels.min_log_margin(
            scan.slots, scan.signs, scan.log_factor, scan.group, scan.n_groups, block)
    return out


def nlw_omega_samples(cutoff: int, samples: int, seed: int):
    """Masses uniform on ``[1, 2]`` and the matching frequency rows."""
    rng = np.random.default_rng(seed)
    masses = rng.uniform(1.0, 2.0, size=samples)
    box = mode_box(1, cutoff)
    sq = box.sq_norms.astype(float)
    return masses, np.sqrt(sq[None, :] + masses[:, None])


def nls_potential_samples(dim: int, cutoff: int, samples: int, seed: int) -> np.ndarray:
    """Potential values per mode, ``(samples, modes)``.

    Each mode draws from its own stream keyed by the mode itself, so boxes
    of different cutoffs see the same values on their common modes.
    """
    box = mode_box(dim, cutoff)
    out = np.empty((samples, len(box)))
    for k, a in enumerate(box.modes):
        seq = np.random.SeedSequence(seed, spawn_key=tuple(int(x) + 2 ** 15 for x in a))
        out[:, k] = np.random.default_rng(seq).uniform(-0.5, 0.5, size=samples)
    return out


def nls_omega_samples(dim: int, cutoff: int, decay: float, samples: int, seed: int):
    box = mode_box(dim, cutoff)
    v = nls_potential_samples(dim, cutoff, samples, seed)
    return v, box.sq_norms[None, :].astype(float) + v / box.weights[None, :] ** decay


def _reports(model, margins, gammas, bound, *, tau, r, cutoff, seed, d=1, decay=None):
    S = margins.shape[0]
    overall = margins.min(axis=1) if margins.shape[1] else np.full(S, np.inf)
    reports = []
    for g in gammas:
        lg = math.log(g) if g > 0 else -math.inf
        frac = float(np.count_nonzero(overall < lg)) / S
        per_l = {l + 3: float(np.count_nonzero(margins[:, l] < lg)) / S
                 for l in range(margins.shape[1])}
        reports.append(MeasureReport(model, S, float(g), float(tau), r, cutoff, frac,
                                     bound(g), ci_half_width(frac, S), seed, per_l, d, decay))
    return reports


def sweep_theta_nlw(r: int, gammas, tau: float, cutoff: int, samples: int, seed: int = 0):
    """Coupled wave-model estimates for every ``gamma`` of ``gammas``."""
    _, omega = nlw_omega_samples(cutoff, samples, seed)
    scan = build_scan(1, cutoff, r, tau, "J")
    margins = scan_margins(scan, omega)
    return _reports("nlw", margins, list(gammas), lambda g: theta_bound_nlw(r, g),
                    tau=tau, r=r, cutoff=cutoff, seed=seed)


def estimate_theta_nlw(r: int, gamma: float, tau: float, cutoff: int, samples: int,
                       seed: int = 0) -> MeasureReport:
    """Fraction of masses in ``[1, 2]`` hitting a resonance zone of length ``3..r+2``."""
    return sweep_theta_nlw(r, [gamma], tau, cutoff, samples, seed)[0]


def sweep_excluded_nls(r: int, gammas, tau: float, cutoff: int, decay: float, samples: int,
                       seed: int = 0, d: int = 2, momenta=None):
    """Coupled Schroedinger-model estimates for every ``gamma`` of ``gammas``."""
    _, omega = nls_omega_samples(d, cutoff, decay, samples, seed)
    scan = build_scan(d, cutoff, r, tau, "I", momenta)
    margins = scan_margins(scan, omega)
    return _reports("nls", margins, list(gammas),
                    lambda g: excluded_bound_nls(r, g, decay, d),
                    tau=tau, r=r, cutoff=cutoff, seed=seed, d=d, decay=decay)


def estimate_excluded_nls(r: int, gamma: float, tau: float, cutoff: int, decay: float,
                          samples: int, seed: int = 0, d: int = 2) -> MeasureReport:
    """Fraction of potential tables hitting a resonance zone outside the action class."""
    return sweep_excluded_nls(r, [gamma], tau, cutoff, decay, samples, seed, d)[0]


def tuple_measure_nls(t, gamma: float, tau: float, decay: float, samples: int,
                      seed: int = 0) -> tuple:
    """Monte Carlo measure of one tuple's resonance zone and its CI half-width."""
    t = t if isinstance(t, IndexTuple) else IndexTuple(t)
    modes = sorted({j.a for j in t.entries})
    rng = np.random.default_rng(seed)
    v = rng.uniform(-0.5, 0.5, size=(samples, len(modes)))
    col = {a: k for k, a in enumerate(modes)}
    omega = np.zeros(samples)
    for j in t.entries:
        sq = sum(x * x for x in j.a)
        w = 1.0 + math.sqrt(sq)
        omega += j.delta * (sq + v[:, col[j.a]] / w ** decay)
    frac = float(np.mean(np.abs(omega) < _threshold(t, gamma, tau)))
    return frac, ci_half_width(frac, samples)


def tuple_measure_nlw(t, gamma: float, tau: float, grid: int = 200_001) -> float:
    """Measure of one tuple's mass zone on a uniform midpoint grid of ``[1, 2]``."""
    t = t if isinstance(t, IndexTuple) else IndexTuple(t)
    m = 1.0 + (np.arange(grid) + 0.5) / grid
    omega = np.zeros(grid)
    for j in t.entries:
        omega += j.delta * np.sqrt(sum(x * x for x in j.a) + m)
    return float(np.mean(np.abs(omega) < _threshold(t, gamma, tau)))


def fit_gamma_exponent(reports) -> float | None:
    """Least-squares slope of ``log hit_fraction`` against ``log gamma`` (non-zero rows)."""
    pts = [(math.log(r.gamma), math.log(r.hit_fraction)) for r in reports
           if r.gamma > 0 and r.hit_fraction > 0]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def write_reports(reports, csv_path, json_path=None, provenance: dict | None = None) -> None:
    """CSV rows ``gamma, hit_fraction, ci, bound`` plus an optional JSON document."""
    csv_path = Path(csv_path)
    with csv_path.open("w", newline="") as fh:
        if provenance:
            for k in sorted(provenance):
                fh.write(f"# {k}: {provenance[k]}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "gamma", "hit_fraction", "ci_half_width", "bound", "below_bound"])
        for rep in reports:
            w.writerow([rep.model, repr(rep.gamma), repr(rep.hit_fraction),
                        repr(rep.ci_half_width), repr(rep.closed_form_bound), int(rep.below_bound)])
    if json_path is not None:
        doc = {"provenance": provenance or {}, "reports": [rep.to_dict() for rep in reports]}
        Path(json_path).write_text(json.dumps(doc, indent=2, sort_keys=True))


__all__ = [
    "MeasureReport", "resonant_indicator_nlw", "estimate_theta_nlw", "estimate_excluded_nls",
    "sweep_theta_nlw", "sweep_excluded_nls", "theta_bound_nlw", "excluded_bound_nls",
    "nlw_tuple_bound", "nls_tuple_bound", "tuple_measure_nls", "tuple_measure_nlw",
    "fit_gamma_exponent", "write_reports", "build_scan", "scan_margins", "ci_half_width",
]
