"""Per-frequency evolutionary solver, initial and boundary value reformulations, presets."""

import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from evoeq.errors import InvalidArgument, NoCertificate
from evoeq.material import Const, ZInvPow, evaluate
from evoeq.presets import PRESETS, preset, solve_neumann_bvp
from evoeq.signal import WeightedSignal, make_grid, weighted_norm
from evoeq.solver import (
    EvoProblem,
    dual_norm,
    recommend_nu,
    solve,
    solve_ivp,
    step_forcing,
    verify_autonomy,
    verify_causality,
    verify_nu_independence,
)
from evoeq.spatial import make_space
from evoeq.timeops import derivative

NU = 4.0
GRID = make_grid(0.0, 1 / 64, 512)


def bump(t, start=1.0, width=2.0):
    s = np.clip((t - start) / width, 0.0, 1.0)
    return np.where((t > start) & (t < start + width), np.sin(np.pi * s) ** 4, 0.0)


@pytest.fixture(scope="module")
def heat():
    return preset("heat", make_space(0.0, 1.0, 32))


def heat_source(tpl, grid=GRID, nu=NU):
    return tpl.forcing(grid, nu, theta=lambda t, x: bump(t) * np.sin(np.pi * x))


class TestSolve:
    def test_heat_residual_and_bound(self, heat):
        sol = solve(heat.problem(heat_source(heat), NU))
        assert sol.residual < 1e-10
        assert sol.norm_bound_ok
        c = sol.certificate.c
        assert weighted_norm(sol.U) <= weighted_norm(heat_source(heat)) / c * (1 + 1e-6)

    def test_zero_forcing(self, heat):
        F = WeightedSignal(GRID, NU, np.zeros((GRID.n, heat.dim)))
        assert np.all(solve(heat.problem(F, NU)).U.values == 0)

    def test_wave_mode(self):
        # v' + ... driven by sin(pi x) f(t); the mode amplitude solves a'' + pi^2 a = f'
        space = make_space(0.0, 1.0, 256)
        tpl = preset("wave", space)
        grid = make_grid(0.0, 1 / 128, 2048)
        F = tpl.forcing(grid, 2.0, v=lambda t, x: bump(t) * np.sin(np.pi * x))
        sol = solve(tpl.problem(F, 2.0))
        parts = tpl.split(sol.U.values)
        x = tpl.coords["v"]
        amp = parts["v"] @ np.sin(np.pi * x) / np.sum(np.sin(np.pi * x) ** 2)
        # modal reference: v_amp' = f - k^2 * int v_amp with k^2 the discrete eigenvalue
        h = space.h
        k2 = (2 / h * np.sin(np.pi * h / 2)) ** 2
        from scipy.integrate import solve_ivp as ode

        rhs = lambda t, y: [bump(np.array(t)) - k2 * y[1], y[0]]
        ref = ode(rhs, (0, grid.times[-1]), [0.0, 0.0], t_eval=grid.times, rtol=1e-11, atol=1e-13).y[0]
        early = grid.times <= 8
        assert np.max(np.abs(amp[early] - ref[early])) < 1e-3

    def test_rejects_non_skew(self):
        F = WeightedSignal(GRID, NU, np.zeros((GRID.n, 2)))
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        with pytest.raises(InvalidArgument):
            solve(EvoProblem(Const(np.eye(2)), A, NU, F))

    def test_rejects_short_window(self, heat):
        g = make_grid(0.0, 1 / 64, 64)
        with pytest.raises(InvalidArgument):
            solve(heat.problem(heat_source(heat, g, 1.0), 1.0))

    def test_no_certificate(self):
        F = WeightedSignal(GRID, NU, np.ones((GRID.n, 1)))
        with pytest.raises(NoCertificate):
            solve(EvoProblem(Const(-1.0, dim=1), np.zeros((1, 1)), NU, F))

    def test_commutes_with_derivative(self, heat):
        F = heat_source(heat)
        p = heat.problem(F, NU)
        a = solve(p.with_forcing(derivative(F))).U
        b = derivative(solve(p).U)
        assert weighted_norm(a - b) < 1e-9 * weighted_norm(b)

    def test_regularity_transfer(self, heat):
        F = heat_source(heat)
        U = solve(heat.problem(F, NU)).U
        parts = heat.split(U.values)
        grad0 = heat.A.matrix[heat.layout["q"], heat.layout["theta"]]
        div = heat.A.matrix[heat.layout["theta"], heat.layout["q"]]
        theta = U.component(heat.layout["theta"])
        dtheta = derivative(theta).values
        balance = dtheta + (div @ parts["q"].T).T - F.values[:, heat.layout["theta"]]
        fourier = parts["q"] + (grad0 @ parts["theta"].T).T
        w = np.exp(-NU * GRID.times)[:, None]
        scale = np.max(np.abs(dtheta * w))
        assert np.max(np.abs(balance * w)) < 1e-8 * scale
        assert np.max(np.abs(fourier * w)) < 1e-8 * scale


class TestIVP:
    def test_zero_initial_value(self, heat):
        sol = solve_ivp(heat.M0, heat.M1, heat.A, np.zeros(heat.dim), NU, GRID)
        assert np.all(sol.U.values == 0)

    def test_attainment_reported(self, heat):
        U0 = heat.state(theta=lambda x: np.sin(np.pi * x))
        grid = make_grid(0.0, 1 / 256, 2048)
        sol = solve_ivp(heat.M0, heat.M1, heat.A, U0, NU, grid)
        assert sol.extras["attainment"] < 0.05
        assert sol.extras["attainment_time"] == grid.dt

    def test_scalar_decay(self):
        # u' + u = 0, u(0) = 1
        grid = make_grid(0.0, 1 / 256, 4096)
        sol = solve_ivp(np.eye(1), np.eye(1), np.zeros((1, 1)), [1.0], 2.0, grid)
        early = (grid.times > 0) & (grid.times < 4)
        assert np.max(np.abs(sol.U.values[early, 0] - np.exp(-grid.times[early]))) < 1e-3

    def test_step_forcing(self):
        g = make_grid(-1.0, 0.5, 6)
        assert_allclose(step_forcing(g, 1.0, [2.0]).values[:, 0], [0, 0, 1, 2, 2, 2])

    def test_dual_norm(self):
        A = np.array([[0.0, -2.0], [2.0, 0.0]])
        # |A| = 2 I
        assert_allclose(dual_norm(A, np.array([3.0, 0.0])), 1.0)


class TestNeumann:
    def test_zero_datum(self):
        grid = make_grid(0.0, 1 / 32, 256)
        sol = solve_neumann_bvp(lambda t: 0 * t, grid=grid, nu=4.0, space=make_space(0.0, 1.0, 16))
        assert np.all(sol.U.values == 0)

    def test_static_flux(self):
        grid = make_grid(0.0, 1 / 32, 512)
        space = make_space(0.0, 1.0, 32)
        # smooth switch-on to a static datum: a jump would add an O(dt) weighted error
        ramp = lambda t: np.where(t >= 1, 1.0, np.sin(np.pi * np.clip(t, 0, 1) / 2) ** 2)
        sol = solve_neumann_bvp(ramp, grid=grid, nu=2.0, space=space)
        m = space.m
        q = sol.U.values[:, m:]
        assert sol.extras["trace_error"] < 1e-12
        assert sol.extras["trace_error_extrapolated"] <= 2 * space.h
        # the flux profile relaxes to the linear stationary profile x
        late = (grid.times >= 2) & (grid.times <= 3)
        assert np.max(np.abs(q[late] - space.nodes[None, :])) < 1e-4

    def test_lift_independence(self):
        grid = make_grid(0.0, 1 / 32, 256)
        space = make_space(0.0, 1.0, 16)
        g = lambda t: t**2 * np.exp(-t) * (t > 0)
        a = solve_neumann_bvp(g, grid=grid, nu=4.0, space=space, lift="linear").U
        b = solve_neumann_bvp(g, grid=grid, nu=4.0, space=space, lift="quadratic").U
        assert weighted_norm(a - b) < 1e-9 * weighted_norm(a)

    def test_non_causal_datum(self):
        grid = make_grid(-1.0, 1 / 32, 512)
        with pytest.raises(InvalidArgument):
            solve_neumann_bvp(lambda t: np.ones_like(t), grid=grid, nu=4.0)

    def test_preset_without_slot(self):
        with pytest.raises(InvalidArgument):
            solve_neumann_bvp(lambda t: t, name="wave", grid=GRID)


class TestVerification:
    def test_causality_heat(self, heat):
        rep = verify_causality(heat.problem(heat_source(heat), NU), 1.0)
        assert rep.passed and rep.f_pre_mass == 0

    def test_causality_zero(self, heat):
        F = WeightedSignal(GRID, NU, np.zeros((GRID.n, heat.dim)))
        assert verify_causality(heat.problem(F, NU), 1.0).passed

    def test_autonomy(self, heat):
        assert verify_autonomy(heat.problem(heat_source(heat), NU), 0.5) < 1e-8

    def test_rate_independence(self, heat):
        rep = verify_nu_independence(heat.problem(heat_source(heat), NU), 8.0)
        assert rep.passed, rep

    def test_rate_independence_zero(self, heat):
        F = WeightedSignal(GRID, NU, np.zeros((GRID.n, heat.dim)))
        assert verify_nu_independence(heat.problem(F, NU), 8.0).discrepancy == 0

    def test_rate_independence_delay_heat(self):
        tpl = preset("delay-heat", make_space(0.0, 1.0, 16))
        F = tpl.forcing(GRID, NU, theta=lambda t, x: bump(t) * np.cos(np.pi * x))
        assert verify_nu_independence(tpl.problem(F, NU), 6.0).passed

    def test_recommend_nu(self):
        nu, cert = recommend_nu(Const(1.0, dim=1) + ZInvPow(1, 1.0, dim=1), T=8.0)
        assert np.exp(-nu * 8.0) < 1e-12 and nu / 2 * 8.0 < -np.log(1e-12)
        assert cert.c > 0


class TestPresets:
    def test_catalog(self):
        assert set(PRESETS) == {
            "heat", "wave", "maxwell1d", "mixed", "dpl", "delay-heat", "frac-elastic", "robin-heat", "memory-heat",
        }

    def test_unknown(self):
        with pytest.raises(InvalidArgument):
            preset("plasma")
        with pytest.raises(InvalidArgument):
            preset("heat", colour=3)

    @pytest.mark.parametrize("s, target", [(1.0, "wave"), (0.0, "heat")])
    def test_mixed_endpoints(self, s, target):
        space = make_space(0.0, 1.0, 8)
        mixed = preset("mixed", space, s=s)
        ref = preset(target, space)
        z = 1.5 + 2j
        assert_allclose(evaluate(mixed.M, z), evaluate(ref.M, z), atol=1e-15)
        assert (mixed.A.matrix - ref.A.matrix).count_nonzero() == 0

    def test_eddy_current(self):
        tpl = preset("maxwell1d", eps=0.0, sigma=1.0)
        assert tpl.certificate.c > 0
        with pytest.raises(InvalidArgument):
            preset("maxwell1d", eps=0.0, sigma=0.0)

    def test_dual_phase_lag(self):
        tpl = preset("dpl", s_q=0.5, s_theta=1.0)
        assert tpl.certificate.c > 0
        with pytest.raises(InvalidArgument):
            preset("dpl", s_q=0.0)
        with pytest.raises(InvalidArgument):
            preset("dpl", s_theta=-1.0)

    @pytest.mark.parametrize(
        "name, params",
        [
            ("heat", {"a": -1.0}),
            ("frac-elastic", {"alpha": 0.25}),
            ("delay-heat", {"h": 0.0}),
            ("memory-heat", {"kappa": 2.0}),
            ("mixed", {"s": 1.5}),
        ],
    )
    def test_hypothesis_violations(self, name, params):
        with pytest.raises(InvalidArgument):
            preset(name, **params)

    def test_robin_is_skew(self):
        A = preset("robin-heat").A.matrix
        assert abs(A + A.conj().T).max() < 1e-12

    def test_general_robin_is_accretive(self):
        tpl = preset("robin-heat", beta=-2.0)
        assert tpl.accretive
        F = tpl.forcing(GRID, NU, theta=lambda t, x: bump(t) + 0 * x)
        assert solve(tpl.problem(F, NU)).norm_bound_ok

    def test_heat_matrices(self):
        tpl = preset("heat", make_space(0.0, 1.0, 4), a=2.0)
        assert_allclose(tpl.M0.diagonal(), [1, 1, 1, 0, 0, 0, 0])
        assert_allclose(tpl.M1.diagonal(), [0, 0, 0, 0.5, 0.5, 0.5, 0.5])
        assert sp.issparse(tpl.M0)
