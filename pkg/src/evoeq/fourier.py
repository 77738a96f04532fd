"""Discrete Fourier-Laplace transform on weighted signals.

Normalisation: for a signal ``f`` with rate ``nu`` on ``t_j = t0 + j*dt``,

.. math:: c_k = \\sqrt{dt/n}\\,\\sum_j e^{-i\\omega_k t_j} e^{-\\nu t_j} f(t_j),
          \\qquad \\omega_k = 2\\pi k/T,

with signed ``k`` so that ``omega_k`` lies in ``(-pi/dt, pi/dt]``.  This
makes ``sum_k |c_k|^2 = ||f||_{2,nu}^2`` exact.  The continuous transform
(with the ``1/sqrt(2 pi)`` convention) is approximated by
``c_k * sqrt(T / (2 pi))``; see :meth:`Spectrum.continuous`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgument
from .signal import TimeGrid, WeightedSignal, support_mass, weighted_norm

__all__ = [
    "Spectrum",
    "frequencies",
    "symbols",
    "forward",
    "inverse",
    "apply_multiplier",
    "hardy_residual",
    "save_spectrum_csv",
]


def frequencies(grid: TimeGrid) -> np.ndarray:
    """Signed angular frequencies in FFT order, range ``(-pi/dt, pi/dt]``."""
    n = grid.n
    k = np.arange(n)
    k = np.where(k <= n // 2, k, k - n)
    return 2.0 * np.pi * k / grid.T


def symbols(grid: TimeGrid, nu: float) -> np.ndarray:
    """Points ``z_k = i omega_k + nu`` at which multipliers are sampled."""
    return 1j * frequencies(grid) + nu


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Transform coefficients of a weighted signal, in FFT order."""

    nu: float
    grid: TimeGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim == 1:
            c = c[:, None]
        if c.shape[0] != self.grid.n:
            raise InvalidArgument(f"expected {self.grid.n} coefficients, got {c.shape[0]}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    @property
    def freqs(self) -> np.ndarray:
        return frequencies(self.grid)

    @property
    def z(self) -> np.ndarray:
        return symbols(self.grid, self.nu)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def continuous(self) -> np.ndarray:
        """Approximate values of the continuous ``L_nu f`` at ``omega_k``."""
        return self.coeffs * np.sqrt(self.grid.T / (2.0 * np.pi))


def _phase(grid: TimeGrid) -> np.ndarray:
    return np.exp(-1j * frequencies(grid) * grid.t0)


def forward(f: WeightedSignal) -> Spectrum:
    """Unitary discrete Fourier-Laplace transform.

    Examples
    --------
    >>> from evoeq.signal import make_grid, from_function
    >>> grid = make_grid(0.0, 0.01, 256)
    >>> f = from_function(grid, 1.0, np.cos)
    >>> bool(abs(forward(f).norm() - f.norm()) < 1e-12)
    True
    """
    grid = f.grid
    g = f.values * np.exp(-f.nu * grid.times)[:, None]
    c = np.fft.fft(g, axis=0) * (np.sqrt(grid.dt / grid.n) * _phase(grid))[:, None]
    return Spectrum(f.nu, grid, c)


def inverse(s: Spectrum) -> WeightedSignal:
    """Exact inverse of :func:`forward`."""
    grid = s.grid
    c = s.coeffs / _phase(grid)[:, None]
    g = np.fft.ifft(c, axis=0) * (grid.n / np.sqrt(grid.dt * grid.n))
    return WeightedSignal(grid, s.nu, g * np.exp(s.nu * grid.times)[:, None])


def apply_multiplier(f: WeightedSignal, symbol) -> WeightedSignal:
    """Apply a scalar spectral multiplier ``symbol(z_k)`` to every component."""
    s = forward(f)
    mult = np.asarray(symbol(s.z), dtype=complex)
    return inverse(Spectrum(s.nu, s.grid, s.coeffs * mult[:, None]))


def hardy_residual(f: WeightedSignal, nus) -> float:
    """Sensitivity of weighted norms to the part of ``f`` before time 0.

    Returns ``max_nu | ||f||_nu - ||f 1_[0,inf)||_nu | / ||f||_{f.nu}``.
    Values near zero indicate a causal signal.

    Parameters
    ----------
    f : WeightedSignal
    nus : sequence of float
        Positive rates; must contain ``f.nu``.
    """
    nus = [float(v) for v in nus]
    if not nus:
        raise InvalidArgument("nus must be nonempty")
    if any(v <= 0 for v in nus):
        raise InvalidArgument("all rates must be positive")
    if not any(np.isclose(v, f.nu, rtol=1e-12, atol=0) for v in nus):
        raise InvalidArgument(f"signal rate {f.nu} is not among nus")
    ref = weighted_norm(f)
    if ref == 0.0:
        return 0.0
    worst = 0.0
    for nu in nus:
        g = f.with_nu(nu)
        rep = support_mass(g, 0.0)
        full = np.sqrt(rep.total)
        causal = np.sqrt(rep.post_mass)
        worst = max(worst, abs(full - causal) / ref)
    return float(worst)


def save_spectrum_csv(s: Spectrum, path) -> None:
    """Write ``omega, re_0, im_0, ...`` rows in ascending frequency order."""
    order = np.argsort(s.freqs, kind="stable")
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["omega"]
        for k in range(s.dim):
            header += [f"re_{k}", f"im_{k}"]
        w.writerow(header)
        for k in order:
            row = [s.freqs[k]]
            for c in s.coeffs[k]:
                row += [c.real, c.imag]
            w.writerow([repr(float(x)) for x in row])
