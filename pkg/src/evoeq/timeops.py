"""Time derivative, causal integrals, shifts, fractional integrals, convolutions.

Spectral operators act through their symbols at ``z_k = i omega_k + nu``:

==============================  ========================
operator                        symbol
==============================  ========================
:func:`derivative`              ``z``
:func:`adjoint_derivative`      ``conj(z) = -z + 2 nu``
``integrate(method='spectral')``  ``1/z``
:func:`fractional_integrate`    ``z**(-alpha)`` (principal branch)
==============================  ========================

Time-domain realisations (quadrature integrals, :func:`shift`,
:func:`convolve`) are exactly causal on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import gamma

from .errors import InvalidArgument, NotInvertible
from .fourier import apply_multiplier
from .signal import WeightedSignal

__all__ = [
    "SampledKernel",
    "derivative",
    "integrate",
    "integration_matrix",
    "adjoint_derivative",
    "shift",
    "fractional_integrate",
    "convolve",
    "kernel_l1_norm",
    "load_kernel_csv",
    "history",
]


def derivative(f: WeightedSignal) -> WeightedSignal:
    """Apply ``d/dt`` through the multiplier ``i omega + nu``."""
    return apply_multiplier(f, lambda z: z)


def adjoint_derivative(f: WeightedSignal) -> WeightedSignal:
    """Adjoint of :func:`derivative` in the weighted space, ``-d/dt + 2 nu``."""
    return apply_multiplier(f, lambda z: -z + 2.0 * f.nu)


def integrate(f: WeightedSignal, method: str = "quadrature") -> WeightedSignal:
    """Bounded inverse of the time derivative.

    Parameters
    ----------
    f : WeightedSignal
    method : {'quadrature', 'trapezoid', 'spectral'}
        ``quadrature`` is the strictly causal left-endpoint cumulative sum
        (for ``nu > 0``; anticausal tail sum for ``nu < 0``).  ``trapezoid``
        is the second-order causal variant used by the ODE solvers.
        ``spectral`` applies ``1/(i omega + nu)`` and is the exact inverse
        of :func:`derivative`.

    Raises
    ------
    NotInvertible
        If ``nu == 0``.
    """
    nu = f.nu
    if nu == 0.0:
        raise NotInvertible("the time derivative is not boundedly invertible for nu = 0")
    if method == "spectral":
        return apply_multiplier(f, lambda z: 1.0 / z)
    dt = f.grid.dt
    v = f.values
    if method == "quadrature":
        if nu > 0:
            out = np.zeros_like(v)
            out[1:] = dt * np.cumsum(v[:-1], axis=0)
        else:
            out = np.zeros_like(v)
            out[:-1] = -dt * np.cumsum(v[::-1], axis=0)[::-1][1:]
        return f.with_values(out)
    if method == "trapezoid":
        mid = 0.5 * dt * (v[1:] + v[:-1])
        out = np.zeros_like(v)
        if nu > 0:
            out[1:] = np.cumsum(mid, axis=0)
        else:
            out[:-1] = -np.cumsum(mid[::-1], axis=0)[::-1]
        return f.with_values(out)
    raise InvalidArgument(f"unknown integration method {method!r}")


def integration_matrix(grid, nu: float, method: str = "quadrature") -> np.ndarray:
    """Dense matrix of :func:`integrate` acting on scalar samples."""
    n = grid.n
    if nu == 0.0:
        raise NotInvertible("the time derivative is not boundedly invertible for nu = 0")
    if method == "spectral":
        from .fourier import symbols

        z = symbols(grid, nu)
        k = np.arange(n)
        t = grid.times
        # F^{-1} diag(1/z) F conjugated with the weight
        F = np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)
        S = F.conj().T @ np.diag(1.0 / z) @ F
        return np.exp(nu * t)[:, None] * S * np.exp(-nu * t)[None, :]
    dt = grid.dt
    if method == "quadrature":
        L = np.tril(np.ones((n, n)), -1) * dt
    elif method == "trapezoid":
        L = np.tril(np.ones((n, n)), -1) * dt
        L[:, 0] -= 0.5 * dt
        L += np.eye(n) * 0.5 * dt
        L[0, 0] = 0.0
    else:
        raise InvalidArgument(f"unknown integration method {method!r}")
    return L if nu > 0 else -L[::-1, ::-1]


def shift(f: WeightedSignal, h: float) -> WeightedSignal:
    """Return ``t -> f(t + h)`` with zero fill at the vacated end.

    ``h`` must be a multiple of the grid step; ``h <= 0`` is a causal delay.
    """
    s = f.grid.steps(h)
    v = f.values
    out = np.zeros_like(v)
    n = f.grid.n
    if s == 0:
        out[:] = v
    elif s > 0:
        if s < n:
            out[: n - s] = v[s:]
    else:
        if -s < n:
            out[-s:] = v[: n + s]
    return f.with_values(out)


def fractional_integrate(f: WeightedSignal, alpha: float, method: str = "spectral") -> WeightedSignal:
    """Riemann-Liouville integral of order ``alpha``.

    Parameters
    ----------
    f : WeightedSignal
    alpha : float
        Order in ``[0, 1]``.
    method : {'spectral', 'quadrature'}
        ``spectral`` applies ``z**(-alpha)`` with the principal branch
        ``(r e^{i theta})^{-alpha} = r^{-alpha} e^{-i alpha theta}``; ``Re z = nu > 0``
        keeps all samples off the branch cut.  ``quadrature`` integrates the
        kernel ``t^(alpha-1)/Gamma(alpha)`` exactly against the left-endpoint
        interpolant of ``f``; it is strictly causal and reduces to
        ``integrate(f)`` at ``alpha = 1``.
    """
    if not (0.0 <= alpha <= 1.0):
        raise InvalidArgument(f"alpha must lie in [0, 1], got {alpha}")
    if f.nu <= 0:
        raise InvalidArgument("fractional integration requires nu > 0")
    if alpha == 0.0:
        return f.with_values(f.values)
    if method == "spectral":
        return apply_multiplier(f, lambda z: np.power(z, -alpha))
    if method == "quadrature":
        n = f.grid.n
        m = np.arange(1, n, dtype=float)
        w = f.grid.dt**alpha / gamma(alpha + 1.0) * (m**alpha - (m - 1.0) ** alpha)
        out = np.zeros_like(f.values)
        out[1:] = fftconvolve(w[:, None], f.values[:-1], axes=0)[: n - 1]
        return f.with_values(out)
    raise InvalidArgument(f"unknown fractional method {method!r}")


@dataclass(frozen=True, eq=False)
class SampledKernel:
    """Scalar kernel sampled at ``t_j = j*dt``, ``j >= 0``."""

    dt: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).ravel()
        if self.dt <= 0:
            raise InvalidArgument("kernel step must be positive")
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise InvalidArgument("kernel samples must be finite and nonempty")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.values.size)

    @classmethod
    def from_samples(cls, t, k, dt: float | None = None, atol: float = 0.0):
        """Build a kernel from samples ``(t, k)``, resampling to ``dt`` if given.

        Raises
        ------
        InvalidArgument
            If the kernel is nonzero at negative times.
        """
        t = np.asarray(t, dtype=float)
        k = np.asarray(k, dtype=complex)
        neg = t < 0
        if np.any(np.abs(k[neg]) > atol):
            raise InvalidArgument("kernel has support before t = 0 (not causal)")
        t, k = t[~neg], k[~neg]
        if t.size < 2:
            raise InvalidArgument("kernel needs at least two samples on t >= 0")
        steps = np.diff(t)
        uniform = np.allclose(steps, steps[0], rtol=1e-9) and abs(t[0]) < 1e-12 * steps[0]
        if dt is None:
            if not uniform:
                raise InvalidArgument("non-uniform kernel samples need an explicit dt")
            return cls(float(steps[0]), k)
        tt = np.arange(0.0, t[-1] + 0.5 * dt, dt)
        vals = np.interp(tt, t, k.real) + 1j * np.interp(tt, t, k.imag)
        return cls(dt, vals)


def kernel_l1_norm(k: SampledKernel, nu: float) -> float:
    """Discrete ``||k||_{L1,nu} = dt sum |k_j| exp(-nu t_j)``."""
    with np.errstate(over="ignore"):
        return float(k.dt * np.sum(np.abs(k.values) * np.exp(-nu * k.times)))


def convolve(k: SampledKernel, f: WeightedSignal) -> WeightedSignal:
    """Causal discrete convolution ``(k*f)_i = dt sum_{j<=i} k_j f_{i-j}``.

    Satisfies ``||k*f||_{2,nu} <= kernel_l1_norm(k, nu) ||f||_{2,nu}`` exactly.
    """
    if not np.isclose(k.dt, f.grid.dt, rtol=1e-9):
        raise InvalidArgument(f"kernel step {k.dt} differs from grid step {f.grid.dt}")
    n = f.grid.n
    kv = k.values[:n]
    out = fftconvolve(kv[:, None], f.values, axes=0)[:n] * f.grid.dt
    return f.with_values(out)


def load_kernel_csv(path, dt: float | None = None) -> SampledKernel:
    """Load a kernel from a two-column CSV ``t, value`` (header optional)."""
    path = Path(path)
    with open(path) as fh:
        first = fh.readline()
    skip = 0 if _is_numeric_row(first) else 1
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    if data.shape[1] < 2:
        raise InvalidArgument("kernel CSV needs columns t, value")
    return SampledKernel.from_samples(data[:, 0], data[:, 1], dt=dt)


def _is_numeric_row(line: str) -> bool:
    try:
        [float(x) for x in line.strip().split(",")]
    except ValueError:
        return False
    return True


def history(f: WeightedSignal, window: float = np.inf) -> float:
    """Weighted norm of the history map ``t -> f(t + .)|_[-window, 0]``.

    Discretised as ``sqrt(dt sum_j e^{-2 nu t_j} dt sum_{t_j - window < t_i <= t_j} |f_i|^2)``.
    Samples before the window start are taken as zero.
    """
    if f.nu <= 0:
        raise InvalidArgument("history requires nu > 0")
    if window < 0:
        raise InvalidArgument("window must be nonnegative")
    dt = f.grid.dt
    mass = np.sum(np.abs(f.values) ** 2, axis=1) * dt
    csum = np.concatenate([[0.0], np.cumsum(mass)])
    n = f.grid.n
    idx = np.arange(n)
    if np.isinf(window):
        inner = csum[idx + 1]
    else:
        w = int(np.rint(window / dt))
        if w == 0:
            return 0.0
        lo = np.maximum(idx + 1 - w, 0)
        inner = csum[idx + 1] - csum[lo]
    return float(np.sqrt(np.sum(f.weights() * inner)))
