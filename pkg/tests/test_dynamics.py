import csv
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from torus_bnf.builders import build_nlw, build_nls, monomial_spec
from torus_bnf.dynamics import (
    fit_exponent,
    flat_state,
    integrate,
    stability_report,
    super_actions,
    verify_transformed_drift,
    weighted_drift_series,
    write_trajectory,
)
from torus_bnf.frequencies import FrequencyModel
from torus_bnf.normal_form import NormalFormConfig, birkhoff_normal_form
from torus_bnf.polynomial import PolynomialFamily, StateVector, gradient, mode_box, sobolev_norm

MASS = 1.5


@pytest.fixture(scope="module")
def wave():
    return FrequencyModel.nlw(MASS), build_nlw(monomial_spec("nlw", 3), MASS, 4)


def reference(H0, P, z0, T):
    """High-accuracy solution through scipy's adaptive integrator."""
    box = z0.box
    omega = H0.on_box(box)
    n = len(box)

    def rhs(_, y):
        xi = y[:n] + 1j * y[n:]
        g = gradient(P, StateVector(z0.dim, z0.cutoff, xi))
        dxi = -1j * (omega * xi + g[n:])
        return np.concatenate([dxi.real, dxi.imag])

    y0 = np.concatenate([z0.xi.real, z0.xi.imag])
    sol = solve_ivp(rhs, (0, T), y0, method="DOP853", rtol=1e-12, atol=1e-14)
    return sol.y[:n, -1] + 1j * sol.y[n:, -1]


class TestIntegrator:
    def test_matches_reference_solution(self, wave):
        H0, P = wave
        z0 = flat_state(1, 4, 0.2, 1.0, np.random.default_rng(0))
        ref = reference(H0, P, z0, 5.0)
        for scheme, dt, tol in (("strang", 0.005, 1e-5), ("yoshida4", 0.02, 1e-7)):
            xi = integrate(H0, P, z0, 5.0, dt, scheme).states[-1]
            assert np.max(np.abs(xi - ref)) <= tol * np.max(np.abs(ref))

    @pytest.mark.parametrize("scheme,order", [("strang", 2), ("yoshida4", 4)])
    def test_convergence_order(self, wave, scheme, order):
        H0, P = wave
        z0 = flat_state(1, 4, 0.3, 1.0, np.random.default_rng(1))
        ref = reference(H0, P, z0, 2.0)
        errs = [np.max(np.abs(integrate(H0, P, z0, 2.0, dt, scheme).states[-1] - ref))
                for dt in (0.1, 0.05, 0.025)]
        rates = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
        assert all(abs(r - order) < 0.4 for r in rates), rates

    def test_time_reversal(self, wave):
        H0, P = wave
        z0 = flat_state(1, 4, 0.2, 1.0, np.random.default_rng(2))
        fwd = integrate(H0, P, z0, 3.0, 0.01).state(-1)
        back = integrate(H0, P, fwd, -3.0, 0.01).state(-1)
        assert np.max(np.abs(back.xi - z0.xi)) <= 1e-12

    def test_linear_flow_conserves_actions(self):
        H0 = FrequencyModel.nlw(1.2)
        z0 = flat_state(1, 6, 0.1, 2.0, np.random.default_rng(3))
        traj = integrate(H0, PolynomialFamily((), 3, dim=1), z0, 100.0, 0.05, stride=50)
        I = traj.action_table
        assert np.max(np.abs(I - I[0])) <= 1e-12
        assert np.nanmax(np.abs(traj.energies - traj.energies[0])) <= 1e-9
        phase = np.exp(-1j * H0.on_box(z0.box) * 100.0)
        np.testing.assert_allclose(traj.states[-1], z0.xi * phase, rtol=1e-10)

    def test_energy_error_is_bounded_and_second_order(self, wave):
        H0, P = wave
        z0 = flat_state(1, 4, 0.05, 1.0, np.random.default_rng(4))
        drift = []
        for dt in (0.04, 0.02):
            e = integrate(H0, P, z0, 200.0, dt, stride=50).energies
            drift.append(np.max(np.abs(e - e[0])) / abs(e[0]))
        assert drift[1] <= 1e-5
        assert 3.0 <= drift[0] / drift[1] <= 5.0

    def test_guard_and_validation(self, wave):
        H0, P = wave
        z0 = flat_state(1, 4, 3.0, 1.0, np.random.default_rng(5))
        traj = integrate(H0, P.scale(50.0), z0, 50.0, 0.01, stride=4, guard=1.05)
        assert traj.stopped_early
        with pytest.raises(ValueError):
            integrate(H0, P, flat_state(1, 2, 0.1, 1.0, np.random.default_rng(0)), 1.0, 0.1)
        with pytest.raises(ValueError):
            integrate(H0, P, z0, 1.0, 0.1, scheme="euler")


class TestObservables:
    def test_norm_convention_and_parseval(self):
        rng = np.random.default_rng(6)
        z = flat_state(2, 2, 0.3, 0.0, rng)
        assert sobolev_norm(z, 0) == pytest.approx(0.3)
        box = z.box
        K = 12
        g = 2 * np.pi * np.arange(K) / K
        pts = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
        u = np.exp(1j * pts @ box.mode_array.T) @ z.xi
        assert sobolev_norm(z, 0) ** 2 == pytest.approx(2 * np.mean(np.abs(u) ** 2))

    def test_super_actions_group_moduli(self):
        z = StateVector(1, 2, {1: 1.0, -1: 2.0, 2: 0.5})
        J = super_actions(z)
        assert J == {0: 0.0, 1: 5.0, 4: 0.25}
        z2 = StateVector(2, 1, {(1, 0): 1.0, (0, -1): 1.0, (1, 1): 3.0})
        assert super_actions(z2)[1] == 2.0 and super_actions(z2)[2] == 9.0

    def test_flat_state_shape(self):
        z = flat_state(1, 8, 0.01, 3.0, np.random.default_rng(7))
        assert sobolev_norm(z, 3.0) == pytest.approx(0.01)
        mags = np.abs(z.xi) * z.box.weights ** 4
        assert np.ptp(mags) <= 1e-12 * mags.max()

    def test_fit_exponent(self):
        eps = np.array([0.1, 0.05, 0.025])
        assert fit_exponent(eps, 7 * eps ** 3) == pytest.approx(3.0)


class TestReports:
    def test_schroedinger_run_and_files(self, tmp_path):
        rng = np.random.default_rng(8)
        pot = {a: float(rng.uniform(-0.5, 0.5)) for a in mode_box(1, 4).modes}
        H0 = FrequencyModel.nls(1, 2.0, pot)
        P = build_nls(monomial_spec("nls", 4, plus=2), 4)
        z0 = flat_state(1, 4, 0.05, 1.0, rng)
        traj = integrate(H0, P, z0, 20.0, 0.01, stride=100, s=1.0)
        rep = stability_report(traj)
        assert rep.norm_ok and rep.epsilon == pytest.approx(0.05)
        # the quartic Schroedinger term conserves every action-free mass class
        dJ, _ = weighted_drift_series(traj)
        assert dJ[0] == 0
        write_trajectory(traj, tmp_path / "t.csv", tmp_path / "t.json", {"seed": 8})
        lines = [ln for ln in (tmp_path / "t.csv").read_text().splitlines() if ln[0] != "#"]
        rows = list(csv.DictReader(lines))
        assert list(rows[0]) == ["t", "norm_s", "H", "max_weighted_J_drift"]
        assert len(rows) == len(traj)

    def test_transformed_drift_smaller_than_raw_drift(self, wave):
        H0, P = wave
        cfg = NormalFormConfig(r=1, gamma=1e-3, tau=1.0, cutoff=4, certify=False)
        out = birkhoff_normal_form(P, H0, cfg)
        z0 = flat_state(1, 4, 0.01, 1.0, np.random.default_rng(9))
        traj = integrate(H0, P, z0, 50.0, 0.02, stride=25, s=1.0)
        rep = verify_transformed_drift(H0, P, out, z0, 50.0, 0.02, s=1.0, trajectory=traj)
        raw = np.max(np.abs(traj.norms ** 2 - traj.norms[0] ** 2))
        assert not rep.escaped
        assert rep.drift < 0.1 * raw
        assert rep.drift <= rep.bound
