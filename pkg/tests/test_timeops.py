"""Time derivative, its inverse, shifts, fractional integrals, kernels and history."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.sparse.linalg import svds
from scipy.special import gamma

from evoeq.errors import InvalidArgument, NotInvertible
from evoeq.fourier import frequencies
from evoeq.signal import from_function, make_grid, support_mass, weighted_inner, weighted_norm, zeros
from evoeq.timeops import (
    SampledKernel,
    adjoint_derivative,
    convolve,
    derivative,
    fractional_integrate,
    history,
    integrate,
    integration_matrix,
    kernel_l1_norm,
    load_kernel_csv,
    shift,
)


def weighted_max_error(a, b):
    w = np.exp(-a.nu * a.grid.times)[:, None]
    return np.max(np.abs((a.values - b.values) * w))


def weighted_operator_norm(L, grid, nu):
    w = np.exp(-nu * grid.times)
    return np.linalg.norm(w[:, None] * L / w[None, :], 2)


class TestDerivative:
    def test_basis_mode(self):
        g = make_grid(0.0, 0.05, 64)
        nu, k = 0.8, 5
        w = frequencies(g)[k]
        f = from_function(g, nu, lambda t: np.exp((1j * w + nu) * t))
        assert_allclose(derivative(f).values, (1j * w + nu) * f.values, rtol=1e-12)

    def test_band_limited_bump(self):
        g = make_grid(-8.0, 1 / 16, 256)
        f = from_function(g, 0.0, lambda t: np.exp(-t**2))
        d = derivative(f)
        assert np.max(np.abs(d.values[:, 0] + 2 * g.times * np.exp(-g.times**2))) < 1e-12

    def test_eigenvalues(self):
        g = make_grid(0.0, 0.25, 16)
        nu = 1.5
        D = np.linalg.inv(integration_matrix(g, nu, "spectral"))
        ev = np.linalg.eigvals(D)
        ev = ev[np.argsort(ev.imag)]
        expected = np.sort(frequencies(g)) * 1j + nu
        assert_allclose(ev, expected, atol=1e-10)


class TestIntegrate:
    def test_indicator(self):
        g = make_grid(-1.0, 1 / 32, 160)
        f = from_function(g, 1.0, lambda t: ((t >= 0) & (t < 1)).astype(float))
        u = integrate(f).values[:, 0].real
        expected = np.clip(g.times, 0.0, 1.0)
        assert_allclose(u, expected, atol=1e-14)

    @pytest.mark.parametrize("method", ["quadrature", "trapezoid"])
    def test_norm_is_inverse_rate(self, method):
        nu, n = 5.0, 4096
        g = make_grid(0.0, 4.0 / n, n)
        w = np.exp(-nu * g.times)
        A = w[:, None] * integration_matrix(g, nu, method) / w[None, :]
        norm = svds(A, k=1, return_singular_vectors=False)[0]
        assert abs(norm * nu - 1) < 0.02

    @pytest.mark.parametrize("nu", [2.0, -2.0])
    def test_inverse_pair(self, make_signal, nu):
        g = make_grid(0.0, 0.01, 256)
        f = make_signal(g, nu)
        assert weighted_max_error(derivative(integrate(f, "spectral")), f) < 1e-12
        assert weighted_max_error(integrate(derivative(f), "spectral"), f) < 1e-12

    def test_zero_rate(self, make_signal):
        f = make_signal(make_grid(0.0, 0.1, 10), 0.0)
        with pytest.raises(NotInvertible):
            integrate(f)

    @pytest.mark.parametrize("method", ["quadrature", "trapezoid"])
    def test_matrix_matches_function(self, make_signal, method):
        g = make_grid(0.0, 0.1, 40)
        for nu in (1.0, -1.0):
            f = make_signal(g, nu)
            assert_allclose(integration_matrix(g, nu, method) @ f.values[:, 0], integrate(f, method).values[:, 0], atol=1e-12)

    def test_negative_rate_is_anticausal(self):
        g = make_grid(0.0, 0.01, 300)
        f = from_function(g, -1.0, lambda t: ((t >= 1) & (t < 2)).astype(float))
        u = integrate(f).values[:, 0].real
        assert_allclose(u[g.times >= 2.0], 0.0)
        assert_allclose(u[g.times < 0.999], -1.0)

    def test_spectral_and_quadrature_agree(self):
        g = make_grid(0.0, 1 / 512, 8192)
        nu = 4.0
        f = from_function(g, nu, lambda t: np.sin(3 * t) * t**2 * np.exp(-t))
        err = weighted_norm(integrate(f, "spectral") - integrate(f, "trapezoid"))
        assert err < 1e-5 * weighted_norm(f)

    @settings(max_examples=20, deadline=None)
    @given(nu=st.floats(0.5, 6.0), seed=st.integers(0, 2**16))
    def test_sobolev_embedding(self, nu, seed):
        r = np.random.default_rng(seed)
        g = make_grid(0.0, 0.02, 200)
        f = from_function(g, nu, lambda t: r.standard_normal(t.size) * np.exp(nu * t))
        u = integrate(f)
        lhs = np.max(np.abs(u.values[:, 0]) * np.exp(-nu * g.times))
        assert lhs <= weighted_norm(f) / np.sqrt(2 * nu) * (1 + 1e-12)


class TestAdjoint:
    def test_adjoint_identity(self, make_signal):
        g = make_grid(0.0, 0.02, 128)
        f, h = make_signal(g, 1.2), make_signal(g, 1.2)
        lhs = weighted_inner(derivative(f), h)
        rhs = weighted_inner(f, adjoint_derivative(h))
        assert abs(lhs - rhs) < 1e-10 * weighted_norm(f) * weighted_norm(h) * 64

    def test_skew_at_zero_rate(self, make_signal):
        f = make_signal(make_grid(0.0, 0.1, 64), 0.0)
        assert_allclose(adjoint_derivative(f).values, -derivative(f).values, atol=1e-12)

    def test_normal(self, make_signal):
        f = make_signal(make_grid(0.0, 0.1, 64), 0.7)
        a = adjoint_derivative(derivative(f))
        b = derivative(adjoint_derivative(f))
        assert weighted_norm(a - b) < 1e-10 * weighted_norm(a)


class TestShift:
    @pytest.mark.parametrize("h", [-0.5, -0.25, 0.25])
    def test_norm(self, h):
        nu = 2.0
        n = 400
        g = make_grid(0.0, 0.025, n)
        steps = g.steps(h)
        L = np.eye(n, k=steps)
        norm = weighted_operator_norm(L, g, nu)
        assert abs(norm / np.exp(h * nu) - 1) < 0.01

    def test_identity(self, make_signal):
        f = make_signal(make_grid(0.0, 0.1, 20), 1.0)
        assert np.array_equal(shift(f, 0.0).values, f.values)

    def test_delay_moves_support(self):
        g = make_grid(0.0, 0.05, 200)
        f = from_function(g, 1.0, lambda t: (t >= 2).astype(float))
        d = shift(f, -1.0)
        assert support_mass(d, 3.0).pre_mass == 0
        assert support_mass(d, 3.0).post_mass > 0

    def test_off_grid(self, make_signal):
        f = make_signal(make_grid(0.0, 0.1, 20), 1.0)
        with pytest.raises(InvalidArgument):
            shift(f, 0.15)


class TestFractional:
    def test_order_one(self, make_signal):
        f = make_signal(make_grid(0.0, 0.05, 128), 2.0)
        assert weighted_max_error(fractional_integrate(f, 1.0), integrate(f, "spectral")) < 1e-10

    def test_order_zero(self, make_signal):
        f = make_signal(make_grid(0.0, 0.05, 128), 2.0)
        assert np.array_equal(fractional_integrate(f, 0.0).values, f.values)

    @pytest.mark.parametrize("alpha", [-0.1, 1.5])
    def test_invalid_order(self, make_signal, alpha):
        f = make_signal(make_grid(0.0, 0.05, 16), 2.0)
        with pytest.raises(InvalidArgument):
            fractional_integrate(f, alpha)

    @settings(max_examples=15, deadline=None)
    @given(a=st.floats(0.05, 0.6), b=st.floats(0.05, 0.4))
    def test_semigroup(self, a, b):
        g = make_grid(0.0, 0.05, 256)
        f = from_function(g, 1.0, lambda t: np.cos(t) + 1j * np.sin(2 * t))
        lhs = fractional_integrate(fractional_integrate(f, a), b)
        rhs = fractional_integrate(f, a + b)
        assert weighted_norm(lhs - rhs) < 1e-8 * weighted_norm(rhs)

    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8])
    def test_power_law(self, alpha):
        # Riemann-Liouville integral of t^3 is Gamma(4)/Gamma(4+alpha) t^(3+alpha)
        nu = 4.0
        g = make_grid(-2.0, 1 / 256, 8192)
        f = from_function(g, nu, lambda t: np.where(t > 0, t, 0.0) ** 3)
        u = fractional_integrate(f, alpha)
        exact = f.with_values(gamma(4) / gamma(4 + alpha) * np.where(g.times > 0, g.times, 0.0) ** (3 + alpha))
        assert weighted_norm(u - exact) < 1e-6 * weighted_norm(exact)

    def test_kernel_symbol(self):
        # weighted transform of t^(alpha-1)/Gamma(alpha) is z^(-alpha): check on the continuous scale
        alpha, nu = 0.5, 1.0
        # substitute t = s^2 to remove the singularity
        s = np.linspace(0.0, 8.0, 400001)
        for w in (0.0, 1.0, 5.0):
            z = 1j * w + nu
            integrand = 2 * s ** (2 * alpha - 1) * np.exp(-z * s**2)
            val = np.trapezoid(integrand, s) / gamma(alpha)
            assert abs(val - z ** (-alpha)) < 1e-6

    @pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0])
    def test_quadrature_is_causal(self, alpha):
        g = make_grid(0.0, 0.02, 256)
        f = from_function(g, 1.0, lambda t: (t >= 2).astype(float))
        out = fractional_integrate(f, alpha, method="quadrature")
        assert support_mass(out, 2.0).pre_mass < 1e-12 * weighted_norm(f) ** 2

    def test_quadrature_order_one_is_integrate(self, make_signal):
        f = make_signal(make_grid(0.0, 0.05, 128), 2.0)
        err = np.max(np.abs(fractional_integrate(f, 1.0, "quadrature").values - integrate(f).values))
        # FFT convolution rounds relative to the largest sample
        assert err < 1e-12 * np.max(np.abs(f.values))

    @pytest.mark.parametrize("alpha", [0.3, 0.7])
    def test_quadrature_matches_spectral(self, alpha):
        g = make_grid(-1.0, 1 / 512, 8192)
        f = from_function(g, 4.0, lambda t: np.where(t > 0, t, 0.0) ** 3 * np.exp(-t))
        a = fractional_integrate(f, alpha, "quadrature")
        b = fractional_integrate(f, alpha)
        assert weighted_norm(a - b) < 1e-2 * weighted_norm(b)


class TestConvolve:
    def test_delta(self, make_signal):
        g = make_grid(0.0, 0.1, 50)
        f = make_signal(g, 1.0)
        k = SampledKernel(0.1, [10.0, 0.0])
        assert_allclose(convolve(k, f).values, f.values, atol=1e-13)

    def test_heaviside_kernel(self):
        g = make_grid(0.0, 0.01, 400)
        f = from_function(g, 1.0, np.cos)
        k = SampledKernel(0.01, np.ones(400))
        diff = convolve(k, f).values - integrate(f).values
        assert np.max(np.abs(diff)) <= 0.01 + 1e-12

    @settings(max_examples=20, deadline=None)
    @given(nu=st.floats(0.1, 4.0), seed=st.integers(0, 2**16))
    def test_norm_bound(self, nu, seed):
        r = np.random.default_rng(seed)
        g = make_grid(0.0, 0.05, 128)
        k = SampledKernel(0.05, r.standard_normal(60))
        f = from_function(g, nu, lambda t: r.standard_normal(t.size) + 0j)
        assert weighted_norm(convolve(k, f)) <= kernel_l1_norm(k, nu) * weighted_norm(f) * (1 + 1e-10)

    def test_precausal_kernel_rejected(self):
        with pytest.raises(InvalidArgument):
            SampledKernel.from_samples([-0.1, 0.0, 0.1], [1.0, 1.0, 1.0])

    def test_step_mismatch(self, make_signal):
        with pytest.raises(InvalidArgument):
            convolve(SampledKernel(0.2, [1.0]), make_signal(make_grid(0.0, 0.1, 5), 1.0))

    def test_causal(self):
        g = make_grid(0.0, 0.05, 200)
        f = from_function(g, 1.0, lambda t: (t >= 3).astype(float))
        out = convolve(SampledKernel(0.05, np.exp(-np.arange(100) * 0.05)), f)
        assert support_mass(out, 3.0).pre_mass < 1e-12 * weighted_norm(f) ** 2

    def test_load_csv(self, tmp_path):
        p = tmp_path / "k.csv"
        p.write_text("t,value\n0,1\n0.5,2\n1.0,3\n")
        k = load_kernel_csv(p)
        assert k.dt == 0.5
        assert_allclose(k.values, [1, 2, 3])
        k2 = load_kernel_csv(p, dt=0.25)
        assert_allclose(k2.values, [1, 1.5, 2, 2.5, 3])


class TestHistory:
    @pytest.mark.parametrize("nu", [0.5, 2.0])
    def test_bound(self, rng, nu):
        g = make_grid(0.0, 0.01, 2000)
        f = from_function(g, nu, lambda t: rng.standard_normal(t.size) * np.exp(nu * t))
        assert history(f) / weighted_norm(f) <= 1 / np.sqrt(2 * nu) * 1.02

    def test_zero_and_empty(self, make_signal):
        g = make_grid(0.0, 0.01, 100)
        assert history(zeros(g, 1.0, 1)) == 0
        assert history(make_signal(g, 1.0), window=0.0) == 0

    def test_rate(self, make_signal):
        with pytest.raises(InvalidArgument):
            history(make_signal(make_grid(0.0, 0.01, 100), 0.0))
