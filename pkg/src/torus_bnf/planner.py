"""Parameter schedules for the wave and Schroedinger stability results.

Every quantity is computed from ``L = ln(1/epsilon)`` so that tiny amplitudes
such as ``1e-40`` (or smaller, passed through ``ln_inv_epsilon``) do not
underflow.  Values like ``gamma`` and the time horizon are reported both as
natural logarithms and, when representable, as floats.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .normal_form import rho_constant

MODES = ("nlw", "nls", "nls-x-free")


class PlannerRejection(ValueError):
    """The amplitude is too large for the schedule to give ``r >= 1``.

    ``plan`` holds the partially evaluated schedule; ``max_epsilon_ln``
    is ``ln(1/epsilon)`` at the largest admissible amplitude.
    """

    def __init__(self, message, plan, max_epsilon_ln):
        super().__init__(message)
        self.plan = plan
        self.max_epsilon_ln = max_epsilon_ln

    @property
    def max_epsilon(self) -> float:
        return math.exp(-self.max_epsilon_ln)


@dataclass
class Plan:
    mode: str
    ln_inv_epsilon: float
    r: int
    tau: float
    s: float
    ln_gamma: float
    ln_horizon: float
    ln_measure_bound: float
    d: int = 1
    lam: float | None = None
    decay: float | None = None

    @property
    def epsilon(self) -> float:
        return math.exp(-self.ln_inv_epsilon)

    @property
    def gamma(self) -> float:
        return math.exp(self.ln_gamma)

    @property
    def horizon(self) -> float:
        return _safe_exp(self.ln_horizon)

    @property
    def measure_bound(self) -> float:
        return math.exp(self.ln_measure_bound)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.update(epsilon=self.epsilon, gamma=self.gamma, horizon=self.horizon,
                   measure_bound=self.measure_bound)
        return out


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def _nlw(L, lam):
    if not 0 < lam < 0.25:
        raise ValueError("lambda must lie in (0, 1/4)")
    r = math.floor(L ** lam) - 2
    tau = 63.0 * (r + 2) ** 3
    plan = Plan("nlw", L, r, tau, 63.0 * L ** (4 * lam), -91.0 * L ** (3 * lam),
                0.5 * L ** (1 + lam), -(L ** lam), lam=lam)
    # r >= 1 needs floor(L^lam) >= 3; the condition epsilon <= exp(-3^(1/lam))
    return plan, 3.0 ** (1.0 / lam)


def _nls(L, d, decay, tau):
    rho = rho_constant(d)
    lr = math.log(rho)
    if tau is None:
        tau = 15.0 * (decay + 2 * d + 1)
    if tau < 15.0 * (decay + 2 * d + 1):
        raise ValueError("tau must be at least 15 (m + 2d + 1)")

    def schedule(L):
        LR = L / lr
        LLR = math.log(LR) / lr if LR > 1 else float("nan")
        if not LLR > 0:
            return None
        r = math.floor(LR / (12 * tau * LLR)) - 3
        return Plan("nls", L, r, tau, LR / (12 * LLR), -lr * LR / (2 * tau * LLR),
                    lr * LR ** 2 / (24 * tau * LLR), -lr * LR / (60 * tau * LLR),
                    d=d, decay=decay)

    plan = schedule(L)
    if plan is None:
        plan = Plan("nls", L, -3, tau, float("nan"), float("nan"), float("nan"),
                    float("nan"), d=d, decay=decay)
    # smallest L with r >= 1; LR / LLR is increasing for LR > e, so bisect from LR = rho
    lo = lr * rho
    hi = lo
    while (schedule(hi).r if schedule(hi) else -3) < 1:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        p = schedule(mid)
        if p is not None and p.r >= 1:
            hi = mid
        else:
            lo = mid
    return plan, hi


def _nls_x_free(L, d, decay, tau):
    rho = rho_constant(d)
    lr = math.log(rho)
    if tau is None:
        tau = 15.0 * (decay + 2 * d + 1)
    LR = L / lr
    r = math.floor(LR / 30) - 3
    plan = Plan("nls-x-free", L, r, tau, tau / 9 * LR, -L / 3, lr * LR ** 2 / 46, -L / 30,
                d=d, decay=decay)
    return plan, 120.0 * lr


def parameter_planner(epsilon: float | None = None, mode: str = "nlw", *, lam: float = 0.249,
                      d: int = 1, decay: float = 1.0, tau: float | None = None,
                      ln_inv_epsilon: float | None = None) -> Plan:
    """Schedule ``(r, gamma, tau, s, horizon)`` for amplitude ``epsilon``.

    ``mode`` is ``"nlw"`` (mass-parameter wave equation, exponent ``lam`` in
    ``(0, 1/4)``), ``"nls"`` (Schroedinger with x-dependent nonlinearity,
    potential decay ``decay`` in dimension ``d``) or ``"nls-x-free"``.
    Raises :class:`PlannerRejection` when the schedule gives ``r < 1``.
    """
    mode = mode.lower()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if ln_inv_epsilon is None:
        if epsilon is None or not 0 < epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        ln_inv_epsilon = -math.log(epsilon)
    L = float(ln_inv_epsilon)
    if L <= 0:
        raise ValueError("epsilon must be smaller than 1")
    if mode == "nlw":
        plan, L_min = _nlw(L, lam)
    elif mode == "nls":
        plan, L_min = _nls(L, d, decay, tau)
    else:
        plan, L_min = _nls_x_free(L, d, decay, tau)
    if plan.r < 1:
        raise PlannerRejection(
            f"epsilon = exp(-{L:.6g}) gives r = {plan.r} < 1; need epsilon <= exp(-{L_min:.6g})",
            plan, L_min)
    return plan


def format_plan(plan: Plan) -> str:
    lines = [
        f"mode            {plan.mode}",
        f"epsilon         {plan.epsilon:.6e}   (ln 1/eps = {plan.ln_inv_epsilon:.12g})",
        f"r               {plan.r}",
        f"tau             {plan.tau:.12g}",
        f"s               {plan.s:.12g}",
        f"gamma           {plan.gamma:.12e}   (ln gamma = {plan.ln_gamma:.12g})",
        f"horizon         {plan.horizon:.12e}   (ln T = {plan.ln_horizon:.12g})",
        f"measure bound   {plan.measure_bound:.12e}   (ln = {plan.ln_measure_bound:.12g})",
    ]
    return "\n".join(lines)


__all__ = ["Plan", "PlannerRejection", "parameter_planner", "format_plan", "MODES"]
