"""Time integration of the truncated Hamiltonian system and stability observables.

The flow is ``d xi_a / dt = -i dH/d conj(xi_a)`` with ``H = H0 + P``.  Only
``xi`` is evolved; the conjugate coordinates follow because ``P`` is real.
The integrator is a splitting method: the quadratic part is solved exactly
by the rotation ``xi_a -> exp(-i omega_a t) xi_a`` and the polynomial part by
a classical RK4 substep.  ``"strang"`` is the symmetric second-order
composition; ``"yoshida4"`` is the fourth-order triple jump built from it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .frequencies import FrequencyModel
from .normal_form import NormalFormOutcome, TransformEscape, rho_constant, transform_state
from .polynomial import PolynomialFamily, StateVector, family_norm, sobolev_norm

_CBRT2 = 2.0 ** (1.0 / 3.0)
SCHEMES = {
    "strang": np.array([1.0]),
    "yoshida4": np.array([1.0 / (2 - _CBRT2), -_CBRT2 / (2 - _CBRT2), 1.0 / (2 - _CBRT2)]),
}
SCHEME_ORDER = {"strang": 2, "yoshida4": 4}


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

def actions(z: StateVector) -> np.ndarray:
    """``I_a = |xi_a|^2`` in box order."""
    return np.abs(z.xi) ** 2


def modulus_classes(box):
    """Distinct values of ``|a|^2`` and the class position of every mode."""
    classes, inverse = np.unique(box.sq_norms, return_inverse=True)
    return classes, inverse


def super_actions(z: StateVector) -> dict:
    """``J`` per modulus class, keyed by the integer ``|a|^2`` of the class."""
    classes, inverse = modulus_classes(z.box)
    vals = np.bincount(inverse, weights=actions(z), minlength=len(classes))
    return {int(c): float(v) for c, v in zip(classes, vals)}


def _super_action_rows(xi: np.ndarray, box) -> np.ndarray:
    classes, inverse = modulus_classes(box)
    I = np.abs(np.atleast_2d(xi)) ** 2
    out = np.zeros((I.shape[0], len(classes)))
    for k in range(I.shape[0]):
        out[k] = np.bincount(inverse, weights=I[k], minlength=len(classes))
    return out


def _energy(omega, slots, coef, xi) -> float:
    ext = np.concatenate([xi, xi.conj(), [1.0 + 0j]])
    value = float(np.sum(omega * np.abs(xi) ** 2))
    if slots.shape[0]:
        value += kernels.poly_value(slots, coef, ext).real
    return value


@dataclass
class Trajectory:
    """Strided snapshots of one run.

    ``states`` is a ``(snapshots, modes)`` array of ``xi`` values; the
    observables are derived from it and :meth:`recompute` rebuilds them.
    """

    times: np.ndarray
    states: np.ndarray
    dim: int
    cutoff: int
    s: float
    norms: np.ndarray = None
    energies: np.ndarray = None
    super_action_table: np.ndarray = None
    action_table: np.ndarray = None
    stopped_early: bool = False
    scheme: str = "strang"
    dt: float = 0.0
    energy_fn: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.norms is None:
            self.recompute()

    def state(self, k: int) -> StateVector:
        return StateVector(self.dim, self.cutoff, self.states[k])

    def recompute(self):
        box = self.state(0).box
        w = box.weights ** (2 * self.s)
        I = np.abs(self.states) ** 2
        self.norms = np.sqrt(2.0 * I @ w)
        self.action_table = I
        self.super_action_table = _super_action_rows(self.states, box)
        if self.energy_fn is not None:
            self.energies = np.array([self.energy_fn(x) for x in self.states])
        elif self.energies is None:
            self.energies = np.full(len(self.times), np.nan)

    def __len__(self):
        return len(self.times)


def integrate(H0: FrequencyModel, P: PolynomialFamily, z0: StateVector, T: float, dt: float,
              scheme: str = "strang", stride: int = 64, s: float = 0.0,
              guard: float | None = 4.0) -> Trajectory:
    """Integrate ``H0 + P`` from ``z0`` up to time ``T`` (negative ``T`` runs backwards).

    The step is ``T / ceil(|T| / dt)``.  A snapshot is stored every
    ``stride`` steps and at the final time.  With ``guard`` set the run stops
    (``stopped_early``) once ``||z||_s`` exceeds ``guard * ||z0||_s``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {sorted(SCHEMES)}")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    if P.dim is not None and P.dim != z0.dim:
        raise ValueError("state dimension does not match the perturbation")
    if P.parts and max(p.max_mode() for p in P) > z0.cutoff:
        raise ValueError("the state cutoff does not cover the perturbation")
    box = z0.box
    omega = H0.on_box(box)
    slots, coef = P.compiled(box)
    weights = SCHEMES[scheme]
    nsteps = int(math.ceil(abs(T) / dt - 1e-12)) if T != 0 else 0
    h = T / nsteps if nsteps else 0.0
    eps = sobolev_norm(z0, s)
    limit = guard * eps if guard is not None and eps > 0 else math.inf
    w = box.weights ** (2 * s)

    xi = z0.xi.copy()
    times, states = [0.0], [xi.copy()]
    done = 0
    stopped = False
    while done < nsteps:
        k = min(stride, nsteps - done)
        xi = kernels.split_steps(xi, omega, slots, coef, h, weights, k)
        done += k
        times.append(done * h)
        states.append(xi.copy())
        nrm = math.sqrt(2.0 * float(np.sum(w * np.abs(xi) ** 2)))
        if not np.all(np.isfinite(xi)) or nrm > limit:
            stopped = True
            break
    return Trajectory(np.array(times), np.array(states), z0.dim, z0.cutoff, s,
                      stopped_early=stopped, scheme=scheme, dt=abs(h),
                      energy_fn=lambda x: _energy(omega, slots, coef, x))


def flat_state(dim: int, cutoff: int, eps: float, s: float, rng: np.random.Generator,
               decay: float | None = None) -> StateVector:
    """Random-phase state with ``|xi_a| ~ <a>^-(s+1)`` rescaled to ``||z||_s = eps``."""
    z = StateVector(dim, cutoff)
    box = z.box
    decay = s + 1.0 if decay is None else decay
    phases = rng.uniform(0.0, 2 * np.pi, size=len(box))
    z.xi = box.weights ** (-decay) * np.exp(1j * phases)
    return z.scaled(eps / sobolev_norm(z, s))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class StabilityReport:
    epsilon: float
    s: float
    nu: float
    horizon: float
    norm_ratio: float
    super_action_drift: float
    action_drift: float
    energy_drift: float
    c2: float | None = None
    stopped_early: bool = False

    @property
    def norm_ok(self) -> bool:
        return self.norm_ratio <= 2.0 and not self.stopped_early

    @property
    def drift_ok(self) -> bool | None:
        if self.c2 is None:
            return None
        return self.super_action_drift <= self.c2

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out.update(norm_ok=self.norm_ok, drift_ok=self.drift_ok)
        return out


def weighted_drift_series(traj: Trajectory) -> tuple:
    """Per-snapshot ``max_a <a>^(2s) |J_a(t) - J_a(0)|`` and the same for ``I``."""
    box = traj.state(0).box
    classes, _ = modulus_classes(box)
    wJ = (1.0 + np.sqrt(classes.astype(float))) ** (2 * traj.s)
    wI = box.weights ** (2 * traj.s)
    J = traj.super_action_table
    I = traj.action_table
    dJ = np.max(wJ * np.abs(J - J[0]), axis=1)
    dI = np.max(wI * np.abs(I - I[0]), axis=1)
    return dJ, dI


def stability_report(traj: Trajectory, s: float | None = None, r: int | None = None,
                     nu: float = 0.0, c2: float | None = None) -> StabilityReport:
    """Norm growth and weighted (super-)action drift normalised by ``eps^(3-nu)``.

    ``eps`` is the initial ``||z||_s``.  ``r`` is accepted for symmetry with
    the corollary's parameters; the drift normalisation does not depend on it.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    if s is not None and s != traj.s:
        traj = Trajectory(traj.times, traj.states, traj.dim, traj.cutoff, s,
                          energies=traj.energies, stopped_early=traj.stopped_early,
                          scheme=traj.scheme, dt=traj.dt)
    eps = float(traj.norms[0])
    scale = eps ** (3 - nu) if eps > 0 else 1.0
    dJ, dI = weighted_drift_series(traj)
    e = traj.energies
    e_drift = float(np.nanmax(np.abs(e - e[0]))) if np.isfinite(e).any() else float("nan")
    return StabilityReport(
        epsilon=eps, s=traj.s, nu=nu, horizon=float(traj.times[-1]),
        norm_ratio=float(np.max(traj.norms) / eps) if eps > 0 else 1.0,
        super_action_drift=float(np.max(dJ)) / scale,
        action_drift=float(np.max(dI)) / scale,
        energy_drift=e_drift, c2=c2, stopped_early=traj.stopped_early)


@dataclass
class TransformedDriftReport:
    """Drift of ``F = ||z'||_s^2`` along ``z' = phi^-1(z(t))``.

    ``bound`` is ``T * 2 max||z'||_s * R_run <|R|>^{R_run}_{s0,N}`` with
    ``R_run = rho max||z'||_s``: the vector-field estimate for the remainder
    combined with ``|dF| <= 2 ||z'|| ||X_R||``.
    """

    epsilon: float
    drift: float
    bound: float
    max_norm: float
    running_radius: float
    escaped: bool
    stability: StabilityReport
    drift_series: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "drift": self.drift, "bound": self.bound,
                "max_norm": self.max_norm, "running_radius": self.running_radius,
                "escaped": self.escaped, "within_bound": self.drift <= self.bound,
                "stability": self.stability.to_dict()}


def transformed_trajectory(traj: Trajectory, generators, steps: int = 32,
                           ball: float | None = None) -> Trajectory:
    """Apply ``phi^-1`` to every snapshot of ``traj``."""
    out = np.empty_like(traj.states)
    for k in range(len(traj)):
        out[k] = transform_state(traj.state(k), generators, "inverse", steps, ball, traj.s).xi
    return Trajectory(traj.times, out, traj.dim, traj.cutoff, traj.s,
                      stopped_early=traj.stopped_early, scheme=traj.scheme, dt=traj.dt)


def verify_transformed_drift(H0: FrequencyModel, P: PolynomialFamily,
                             outcome: NormalFormOutcome, z0: StateVector, T: float, dt: float,
                             s: float = 0.0, scheme: str = "strang", stride: int = 64,
                             trajectory: Trajectory | None = None) -> TransformedDriftReport:
    """Integrate ``z`` and measure how much ``||phi^-1(z(t))||_s^2`` moves.

    Pass ``trajectory`` to reuse an existing run of ``H0 + P`` from ``z0``.
    """
    traj = trajectory if trajectory is not None else integrate(
        H0, P, z0, T, dt, scheme=scheme, stride=stride, s=s)
    d = z0.dim
    eps = sobolev_norm(z0, s)
    escaped = traj.stopped_early
    try:
        tr = transformed_trajectory(traj, outcome.generators, ball=4 * eps if eps > 0 else None)
    except TransformEscape:
        tr = transformed_trajectory(traj, outcome.generators)
        escaped = True
    F = tr.norms ** 2
    series = np.abs(F - F[0])
    max_norm = float(np.max(tr.norms))
    rho = rho_constant(d)
    R_run = rho * max_norm
    half = (d + 1) / 2
    R_norm = family_norm(outcome.R, s - half, s + half, R_run) if outcome.R.parts else 0.0
    bound = abs(traj.times[-1]) * 2 * max_norm * R_run * R_norm
    return TransformedDriftReport(eps, float(np.max(series)), float(bound), max_norm, R_run,
                                  escaped, stability_report(tr), series)


def fit_exponent(eps_values, drifts) -> float:
    """Least-squares slope of ``log drift`` against ``log eps``."""
    x = np.log(np.asarray(eps_values, dtype=float))
    y = np.log(np.asarray(drifts, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def write_trajectory(traj: Trajectory, csv_path, json_path=None,
                     provenance: dict | None = None) -> None:
    """CSV columns ``t, norm_s, H, max_weighted_J_drift`` and optional JSON snapshots."""
    dJ, _ = weighted_drift_series(traj)
    with Path(csv_path).open("w", newline="") as fh:
        for k in sorted(provenance or {}):
            fh.write(f"# {k}: {provenance[k]}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "norm_s", "H", "max_weighted_J_drift"])
        for t, n, e, j in zip(traj.times, traj.norms, traj.energies, dJ):
            w.writerow([repr(float(t)), repr(float(n)), repr(float(e)), repr(float(j))])
    if json_path is not None:
        doc = {
            "provenance": provenance or {},
            "d": traj.dim, "cutoff": traj.cutoff, "s": traj.s, "scheme": traj.scheme,
            "dt": traj.dt, "stopped_early": traj.stopped_early,
            "times": traj.times.tolist(),
            "states": [{"re": x.real.tolist(), "im": x.imag.tolist()} for x in traj.states],
        }
        Path(json_path).write_text(json.dumps(doc, sort_keys=True))


__all__ = [
    "Trajectory", "integrate", "super_actions", "actions", "sobolev_norm", "stability_report",
    "StabilityReport", "verify_transformed_drift", "TransformedDriftReport", "flat_state",
    "fit_exponent", "write_trajectory", "weighted_drift_series", "transformed_trajectory",
    "SCHEMES", "SCHEME_ORDER",
]
