"""Periodic homogenization and weak limits of oscillating coefficients.

Cell problems are discretised on the staggered periodic grid of
:func:`evoeq.spatial.build_periodic_grad` (tensor products of it in two
dimensions).  The corrector is sought in the range of the periodic
gradient, parametrised by potentials with the first entry pinned to zero,
so the Galerkin system is the compressed one on that range.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from math import factorial
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import cumulative_trapezoid

from .errors import ContractionViolation, InvalidArgument, InvalidCoefficient, NumericalAmbiguity
from .fourier import Spectrum, forward, inverse
from .material import Const, ZInvPow
from .signal import TimeGrid, WeightedSignal, make_grid
from .solver import EvoProblem, solve, step_forcing
from .spatial import SpaceGrid, build_periodic_grad, skew_block

__all__ = [
    "WeakLimitReport",
    "weak_limit_mean",
    "CellProblem",
    "Corrector",
    "cell_problem",
    "homogenized_matrix",
    "harmonic_mean",
    "two_phase",
    "bessel_J",
    "sin_moments",
    "wot_limit_series",
    "SweepTable",
    "oscillation_sweep",
]


# ---------------------------------------------------------------- weak limits


@dataclass(frozen=True)
class WeakLimitReport:
    """Pairings ``int f(n x) g(x) dx`` against their limit ``mean(f) int g``."""

    n: tuple
    pairings: np.ndarray
    limit: complex
    gaps: np.ndarray


def _periodic_eval(f, y: np.ndarray) -> np.ndarray:
    if callable(f):
        return np.asarray(f(y), dtype=complex)
    s = np.asarray(f, dtype=complex)
    idx = np.floor(np.mod(y, 1.0) * s.size).astype(int) % s.size
    return s[idx]


def _window_eval(g, x: np.ndarray, window) -> np.ndarray:
    if callable(g):
        return np.asarray(g(x), dtype=complex)
    s = np.asarray(g, dtype=complex)
    a, b = window
    idx = np.clip(np.floor((x - a) / (b - a) * s.size).astype(int), 0, s.size - 1)
    return s[idx]


def weak_limit_mean(f, g, n_list: Sequence[int], window: tuple = (0.0, 1.0),
                    n_quad: int | None = None) -> WeakLimitReport:
    """Pair ``f(n .)`` with ``g`` for each ``n`` and compare with the weak limit.

    Parameters
    ----------
    f : callable or array_like
        One-periodic function, or its samples on equal cells of ``[0, 1)``
        (read as piecewise constant).
    g : callable or array_like
        Test function on ``window``, or its samples on equal cells.
    n_list : sequence of int
    window : (a, b)
    n_quad : int, optional
        Midpoint nodes on ``window``; defaults to at least 64 per period of
        the finest oscillation.
    """
    a, b = map(float, window)
    if not b > a:
        raise InvalidArgument("window must satisfy a < b")
    ns = tuple(int(n) for n in n_list)
    if not ns or any(n < 1 for n in ns):
        raise InvalidArgument("n_list must hold positive integers")
    p = 1 if callable(f) else np.asarray(f).size
    N = n_quad or max(2**14, 64 * max(ns) * max(p, 1) * max(1, math.ceil(b - a)))
    h = (b - a) / N
    x = a + h * (np.arange(N) + 0.5)
    gx = _window_eval(g, x, window)
    pair = np.array([h * np.sum(_periodic_eval(f, n * x) * gx) for n in ns])
    if callable(f):
        y = (np.arange(4096) + 0.5) / 4096
        mean_f = complex(np.mean(_periodic_eval(f, y)))
    else:
        mean_f = complex(np.mean(np.asarray(f, dtype=complex)))
    limit = mean_f * complex(h * np.sum(gx))
    return WeakLimitReport(ns, pair, limit, np.abs(pair - limit))


# ---------------------------------------------------------------- cell problems


@dataclass(frozen=True, eq=False)
class CellProblem:
    """Periodic coefficient on the unit cell and a direction.

    Parameters
    ----------
    a_samples : ndarray
        Shape ``(p,)`` in one dimension; ``(p1, p2)`` for a scalar or
        ``(p1, p2, 2, 2)`` for a matrix coefficient in two dimensions.
        Values sit at the points where the periodic gradient lives.
    xi : array_like
        Direction, length ``d``.
    """

    a_samples: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        a = np.array(self.a_samples, dtype=complex)
        if a.ndim == 1:
            d = 1
        elif a.ndim == 2:
            d = 2
        elif a.ndim == 4 and a.shape[2:] == (2, 2):
            d = 2
        else:
            raise InvalidArgument(f"unsupported coefficient shape {a.shape}")
        if min(a.shape[:d]) < 2:
            raise InvalidArgument("need at least 2 samples per direction")
        xi = np.atleast_1d(np.asarray(self.xi, dtype=complex))
        if xi.shape != (d,):
            raise InvalidArgument(f"xi must have length {d}")
        a.setflags(write=False)
        object.__setattr__(self, "a_samples", a)
        object.__setattr__(self, "xi", xi)

    @property
    def d(self) -> int:
        return 1 if self.a_samples.ndim == 1 else 2

    @property
    def shape(self) -> tuple:
        return self.a_samples.shape[: self.d]


@dataclass(frozen=True, eq=False)
class Corrector:
    """``v = grad w + xi`` with diagnostics.

    Attributes
    ----------
    v : ndarray
        Shape ``(d, *cell_shape)``.
    w : ndarray
        Potential on the cell grid with ``w[0] = 0``.
    residual : float
        ``|div(a v)| / |a xi|`` (discrete periodic divergence).
    range_defect : float
        Distance of ``v - xi`` from the range of the periodic gradient,
        relative to ``|v|``.
    c : float
        Smallest sampled eigenvalue of ``Re a``.
    """

    v: np.ndarray
    w: np.ndarray
    residual: float
    range_defect: float
    c: float


def _periodic_grad(shape) -> sp.csr_array:
    if len(shape) == 1:
        return build_periodic_grad(SpaceGrid(0.0, 1.0, shape[0])).matrix
    G1 = build_periodic_grad(SpaceGrid(0.0, 1.0, shape[0])).matrix
    G2 = build_periodic_grad(SpaceGrid(0.0, 1.0, shape[1])).matrix
    I1 = sp.eye_array(shape[0])
    I2 = sp.eye_array(shape[1])
    return sp.csr_array(sp.vstack([sp.kron(G1, I2), sp.kron(I1, G2)]))


def _coefficient_operator(c: CellProblem) -> tuple[sp.csr_array, float]:
    """Pointwise multiplication by ``a`` on stacked gradient fields, and ``min Re a``."""
    a = c.a_samples
    if c.d == 1 or a.ndim == 2:
        flat = a.ravel()
        low = float(np.min(flat.real))
        diag = np.tile(flat, c.d)
        return sp.csr_array(sp.diags(diag)), low
    p = a.shape[0] * a.shape[1]
    A = a.reshape(p, 2, 2)
    H = 0.5 * (A + A.conj().transpose(0, 2, 1))
    low = float(np.min(np.linalg.eigvalsh(H)[:, 0]))
    blocks = [[sp.diags(A[:, i, j]) for j in range(2)] for i in range(2)]
    return sp.csr_array(sp.block_array(blocks)), low


def cell_problem(c: CellProblem, tol: float = 1e-8) -> Corrector:
    """Solve ``div(a (grad w + xi)) = 0`` for the periodic corrector.

    Raises
    ------
    InvalidCoefficient
        If ``Re a`` is not uniformly positive on the samples.
    NumericalAmbiguity
        If the divergence residual exceeds ``tol``.
    """
    Aop, low = _coefficient_operator(c)
    if not low > 0:
        raise InvalidCoefficient(f"Re a has sampled minimum {low:.3g}; need Re a >= c > 0")
    shape = c.shape
    N = int(np.prod(shape))
    G = _periodic_grad(shape)
    B = sp.csc_array(G[:, 1:])
    xi = np.repeat(c.xi, N)
    K = sp.csc_array(B.T @ Aop @ B)
    rhs = -(B.T @ (Aop @ xi))
    y = spla.splu(K).solve(rhs)
    w = np.concatenate([[0.0], y])
    grad_w = G @ w
    v = grad_w + xi
    flux = Aop @ v
    res = float(np.linalg.norm(G.T @ flux) / max(np.linalg.norm(Aop @ xi), 1e-300))
    # grad_w is in the range by construction; recheck it through a least-squares fit.
    back = spla.lsqr(B, grad_w, atol=1e-14, btol=1e-14)[0]
    defect = float(np.linalg.norm(B @ back - grad_w) / max(np.linalg.norm(v), 1e-300))
    if res > tol:
        raise NumericalAmbiguity(f"cell problem residual {res:.3g} exceeds {tol:.1g}")
    return Corrector(v.reshape((c.d,) + shape), w.reshape(shape), res, defect, low)


def _adjoint_samples(a: np.ndarray) -> np.ndarray:
    if a.ndim == 4:
        return a.conj().transpose(0, 1, 3, 2)
    return a.conj()


def _hom(a: np.ndarray, tol: float) -> np.ndarray:
    c0 = CellProblem(a, np.zeros(1 if a.ndim == 1 else 2))
    d = c0.d
    out = np.empty((d, d), dtype=complex)
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        cor = cell_problem(CellProblem(a, e), tol)
        Aop, _ = _coefficient_operator(c0)
        flux = (Aop @ cor.v.ravel()).reshape(d, -1)
        # average the deviation from the first sample so a constant a is reproduced exactly
        ref = flux[:, :1]
        out[:, j] = ref[:, 0] + (flux - ref).mean(axis=1)
    return out


def homogenized_matrix(a_samples, check: bool = True, tol: float = 1e-8) -> np.ndarray:
    """Effective coefficient with columns ``mean(a v_{e_j})``.

    With ``check`` the adjoint relation ``(a^*)_hom = (a_hom)^*`` and
    ``Re a_hom > 0`` are verified.

    Raises
    ------
    InvalidCoefficient
        Propagated from :func:`cell_problem`.
    NumericalAmbiguity
        If a consistency check fails.
    """
    a = np.asarray(a_samples, dtype=complex)
    ahom = _hom(a, tol)
    if check:
        adj = _hom(_adjoint_samples(a), tol)
        gap = float(np.max(np.abs(adj - ahom.conj().T)))
        if gap > 1e-8 * max(1.0, float(np.max(np.abs(ahom)))):
            raise NumericalAmbiguity(f"(a*)_hom differs from (a_hom)* by {gap:.3g}")
        low = float(np.linalg.eigvalsh(0.5 * (ahom + ahom.conj().T))[0])
        if not low > 0:
            raise NumericalAmbiguity(f"Re a_hom has eigenvalue {low:.3g}")
    return ahom


def harmonic_mean(a) -> complex:
    """``(mean(1/a))^{-1}``."""
    a = np.asarray(a, dtype=complex)
    return complex(1.0 / np.mean(1.0 / a))


def two_phase(p: int, a1: float, a2: float, fraction: float = 0.5) -> np.ndarray:
    """Cell samples equal to ``a1`` on the first ``fraction`` of the cell and ``a2`` after."""
    y = np.arange(p) / p
    return np.where(y < fraction, a1, a2).astype(float)


# ---------------------------------------------------------------- memory limits


def bessel_J(s, n_points: int = 2048) -> np.ndarray:
    """``J(s) = int_0^1 exp(s sin(2 pi x)) dx`` by the periodic trapezoid rule."""
    s = np.asarray(s, dtype=float)
    x = np.arange(n_points) / n_points
    return np.mean(np.exp(s[..., None] * np.sin(2.0 * np.pi * x)), axis=-1)


def sin_moments(K: int) -> np.ndarray:
    """``C_k = int_0^1 sin(2 pi x)^k dx`` for ``k = 0..K``: ``(2m)!/(m! 2^m)^2`` for ``k = 2m``, else 0."""
    C = np.zeros(K + 1)
    for k in range(0, K + 1, 2):
        m = k // 2
        C[k] = factorial(2 * m) / (factorial(m) * 2**m) ** 2
    return C


def wot_limit_series(moments, f: WeightedSignal, K: int | None = None, bound: float | None = None,
                     tol: float = 1e-12) -> WeightedSignal:
    """Apply ``sum_{k<=K} (-d^{-1})^k C_k d^{-1}`` to ``f`` spectrally.

    Parameters
    ----------
    moments : sequence
        ``C_0, C_1, ...`` as scalars or ``dim x dim`` matrices.
    f : WeightedSignal
    K : int, optional
        Truncation order; chosen from the tail bound when omitted.
    bound : float, optional
        ``sup |B_n|`` of the oscillating family; defaults to
        ``max_k |C_k|^{1/k}``.
    tol : float
        Tail tolerance used when ``K`` is omitted.

    Raises
    ------
    ContractionViolation
        If ``f.nu <= 2 * bound``.
    InvalidArgument
        If fewer than ``K + 1`` moments are supplied.
    """
    Cs = [np.asarray(c, dtype=complex) for c in moments]
    if not Cs:
        raise InvalidArgument("need at least one moment")
    if bound is None:
        bound = max([0.0] + [float(np.linalg.norm(np.atleast_2d(c), 2)) ** (1.0 / k)
                             for k, c in enumerate(Cs) if k > 0])
    nu = f.nu
    if not nu > 2.0 * bound:
        raise ContractionViolation(f"nu = {nu} must exceed 2 sup|B_n| = {2 * bound:.3g}")
    q = bound / nu
    if K is None:
        K = 0
        while q > 0 and q ** (K + 1) / (1 - q) >= tol:
            K += 1
        K = min(K, len(Cs) - 1)
    if K + 1 > len(Cs):
        raise InvalidArgument(f"K = {K} needs {K + 1} moments, got {len(Cs)}")
    spec = forward(f)
    z = spec.z
    dim = f.dim
    out = np.zeros_like(spec.coeffs)
    powz = 1.0 / z
    for k in range(K + 1):
        C = Cs[k]
        if C.ndim == 0:
            out += (C * powz)[:, None] * spec.coeffs
        else:
            if C.shape != (dim, dim):
                raise InvalidArgument(f"moment {k} has shape {C.shape}, expected {(dim, dim)}")
            out += powz[:, None] * (spec.coeffs @ C.T)
        powz = powz * (-1.0 / z)
    return inverse(Spectrum(nu, f.grid, out))


# ---------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepTable:
    """Error table of an oscillation sweep, one row per ``n``."""

    problem: str
    columns: tuple
    rows: tuple
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows], dtype=float)

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])


def _wave_solve(a_nodes: np.ndarray, space: SpaceGrid, grid: TimeGrid, nu: float,
                forcing: Callable) -> WeightedSignal:
    G = build_periodic_grad(space)
    m = space.m
    M0 = sp.diags(np.concatenate([np.ones(m), 1.0 / a_nodes]).astype(complex))
    law = Const(sp.csr_array(M0))
    vals = np.zeros((grid.n, 2 * m), dtype=complex)
    vals[:, :m] = forcing(grid.times[:, None], space.cells[None, :])
    F = WeightedSignal(grid, nu, vals)
    return solve(EvoProblem(law, skew_block(G), nu, F, name="wave-periodic")).U


def _wave_forcing(t, x):
    return np.where(t > 0, t**2 * np.exp(-2.0 * t), 0.0) * np.sin(2.0 * np.pi * x)


def _sweep_wave(n_list, a1=1.0, a2=4.0, m=1024, grid=None, nu=1.0, forcing=None):
    space = SpaceGrid(0.0, 1.0, m)
    grid = grid or make_grid(0.0, 1.0 / 32, 1024)
    forcing = forcing or _wave_forcing
    nodes = space.nodes[1:]
    cell = lambda y: np.where(np.mod(y, 1.0) < 0.5 - 1e-12, a1, a2)  # noqa: E731
    for n in n_list:
        if (m // n) * n != m or (m // n) % 2:
            raise InvalidArgument(f"m = {m} must be an even multiple of n = {n}")
    ahom = harmonic_mean(cell(nodes))
    ref = _wave_solve(np.full(m, ahom), space, grid, nu, forcing)
    v_ref = ref.component(slice(0, m))
    scale = v_ref.norm() * math.sqrt(space.h)
    rows = []
    for n in n_list:
        U = _wave_solve(cell(n * nodes), space, grid, nu, forcing)
        v = U.component(slice(0, m))
        err = (v - v_ref).norm() * math.sqrt(space.h)
        rows.append((int(n), err / scale, err))
    meta = {"a1": a1, "a2": a2, "a_hom": ahom.real, "m": m, "nu": nu, "dt": grid.dt, "n_t": grid.n}
    return SweepTable("wave-periodic", ("n", "rel_error", "abs_error"), tuple(rows), meta)


def _sweep_sin_memory(n_list, nu=4.0, grid=None, t_max=1.0, f_tilde=None, K=20, points_per_period=16):
    grid = grid or make_grid(0.0, 1.0 / 256, 2048)
    f_tilde = f_tilde or (lambda x: 1.0 + x)
    t = grid.times
    # the sample at the jump of the step forcing carries an O(dt) spectral artifact
    sel = (t > 0) & (t <= t_max)
    r = np.linspace(0.0, t_max, 20001)
    prim = cumulative_trapezoid(bessel_J(-r), r, initial=0.0)
    rows = []
    for n in n_list:
        nx = points_per_period * int(n)
        x = (np.arange(nx) + 0.5) / nx
        b = np.sin(2.0 * np.pi * n * x)
        ft = np.asarray(f_tilde(x), dtype=complex)
        mean_f = complex(np.mean(ft))
        law = Const(sp.csr_array(sp.eye_array(nx, dtype=complex))) + ZInvPow(1, sp.diags(b.astype(complex)))
        F = step_forcing(grid, nu, ft)
        U = solve(EvoProblem(law, sp.csr_array((nx, nx), dtype=complex), nu, F, name="ode-sin-memory")).U
        avg = U.values.mean(axis=1)
        ref = mean_f * np.interp(t[sel], r, prim)
        err_j = float(np.max(np.abs(avg[sel] - ref)))
        step = step_forcing(grid, nu, [mean_f])
        series = wot_limit_series(sin_moments(K), step, K=K, bound=1.0).values[:, 0]
        err_s = float(np.max(np.abs(avg[sel] - series[sel])))
        rows.append((int(n), err_j, err_s))
    meta = {"nu": nu, "dt": grid.dt, "n_t": grid.n, "t_max": t_max, "K": K,
            "points_per_period": points_per_period}
    return SweepTable("ode-sin-memory", ("n", "error_bessel", "error_series"), tuple(rows), meta)


_SWEEPS = {"wave-periodic": _sweep_wave, "ode-sin-memory": _sweep_sin_memory}


def oscillation_sweep(problem: str, n_list: Sequence[int], **options) -> SweepTable:
    """Compare oscillating-coefficient solutions with their limit problem.

    ``wave-periodic`` solves ``d^2 u - div a(n x) grad u = f`` on the
    periodic unit interval as a first-order system and reports the
    velocity error against the problem with the homogenized coefficient.
    ``ode-sin-memory`` solves ``(d + sin(2 pi n x)) u = 1_[0,inf) f~(x)``
    and compares the spatial average with the Bessel-kernel memory
    solution and with :func:`wot_limit_series`.

    Raises
    ------
    InvalidArgument
        For an unknown problem id.
    """
    fn = _SWEEPS.get(problem)
    if fn is None:
        raise InvalidArgument(f"unknown problem {problem!r}; choose from {', '.join(_SWEEPS)}")
    ns = [int(n) for n in n_list]
    if not ns or any(n < 1 for n in ns):
        raise InvalidArgument("n_list must hold positive integers")
    return fn(ns, **options)
