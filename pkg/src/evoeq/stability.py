"""Exponential stability of parabolic-type evolutionary equations.

The systems covered have the block form

    d/dt [[M0, 0], [0, 0]] + [[0, 0], [0, M1(d/dt)]] + [[0, -C^*], [C, 0]]

with ``M0 >= c0 > 0``, ``Re M1(z) >= c1 > 0`` on ``Re z > -rho1`` and ``C``
boundedly invertible.  :func:`decay_rate_bound` evaluates the guaranteed
decay rate ``min(rho1, c1 / (sup|M1|^2 |M0| |C^-1|^2))``; the remaining
functions measure decay of computed trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy import stats

from .errors import InvalidArgument, NoCertificate, UnderflowWindow
from .material import Const, MaterialLaw
from .signal import TimeGrid, WeightedSignal, make_grid
from .solver import EvoProblem, solve
from .spatial import CompressedOperator, SpaceGrid, SpatialOperator, build_grad0_div, range_compress

__all__ = [
    "StabilitySetup",
    "stability_setup",
    "decay_rate_bound",
    "heat_setup",
    "delay_rate_cap",
    "delay_heat_setup",
    "dpl_stability_law",
    "dpl_setup",
    "DecayFit",
    "measure_decay",
    "ReweightedReport",
    "reweighted_growth",
    "counterexample_solution",
]


@dataclass(frozen=True, eq=False)
class StabilitySetup:
    """Certified data of a parabolic-type system.

    Attributes
    ----------
    M0 : ndarray
        Hermitian block on the domain space of ``C``.
    M1 : callable
        ``z -> M1(z)`` already compressed to the range of ``C``.
    C : CompressedOperator
    rho1 : float
        Half-plane ``Re z > -rho1`` on which ``M1`` is certified (``inf``
        for a constant ``M1``).
    c0, c1 : float
        Sampled lower bounds of ``M0`` and ``Re M1``.
    norm_M0, sup_M1 : float
        ``|M0|`` and the sampled ``sup |M1(z)|``.
    inv_norm_C : float
        ``|C^-1| = 1 / sigma_min(C)``.
    n_samples : int
        Number of points at which ``M1`` was evaluated.
    """

    M0: np.ndarray
    M1: Callable
    C: CompressedOperator
    rho1: float
    c0: float
    c1: float
    norm_M0: float
    sup_M1: float
    inv_norm_C: float
    n_samples: int = 0

    def to_dict(self) -> dict:
        return {
            "rho1": self.rho1,
            "c0": self.c0,
            "c1": self.c1,
            "norm_M0": self.norm_M0,
            "sup_M1": self.sup_M1,
            "inv_norm_C": self.inv_norm_C,
            "n_samples": self.n_samples,
        }


def _dense(B) -> np.ndarray:
    if isinstance(B, SpatialOperator):
        return B.matrix.toarray()
    if sp.issparse(B):
        return B.toarray()
    return np.atleast_2d(np.asarray(B, dtype=complex))


def _half_plane_points(rho1: float, n_re: int = 24, n_im: int = 48) -> np.ndarray:
    """Sample points of ``Re z > -rho1`` clustered at the boundary line."""
    scale = max(1.0, rho1)
    offsets = scale * np.logspace(-8, 3, n_re)
    ims = np.logspace(-2, 4, n_im // 2)
    ims = np.concatenate([[0.0], ims, -ims])
    return (-rho1 + offsets)[:, None] + 1j * ims[None, :]


def stability_setup(M0, M1, C, rho1: float = math.inf, n_re: int = 24, n_im: int = 48) -> StabilitySetup:
    """Certify the hypotheses of the parabolic decay criterion by sampling.

    Parameters
    ----------
    M0 : array_like
        Hermitian matrix on the domain of ``C``.
    M1 : array_like, MaterialLaw or callable
        Law of the flux block, given on the full codomain of ``C``; it is
        compressed to the range of ``C``.  A constant matrix may use
        ``rho1 = inf``.
    C : SpatialOperator, matrix or CompressedOperator
        Must be injective.
    rho1 : float
        Half-plane margin.

    Raises
    ------
    InvalidArgument
        If ``C`` has a kernel, shapes mismatch, or a non-constant ``M1`` is
        given with ``rho1 = inf``.
    NoCertificate
        If ``M0`` or ``Re M1`` fails to be positive at a sample.
    """
    if not rho1 > 0:
        raise InvalidArgument(f"rho1 must be positive, got {rho1}")
    comp = C if isinstance(C, CompressedOperator) else range_compress(C)
    n0 = comp.domain_basis.shape[0]
    if comp.rank != n0:
        raise InvalidArgument(
            f"C has a kernel of dimension {n0 - comp.rank}; bounded invertibility fails"
        )
    M0 = _dense(M0)
    if M0.shape != (n0, n0):
        raise InvalidArgument(f"M0 has shape {M0.shape}, expected {(n0, n0)}")
    if not np.allclose(M0, M0.conj().T, rtol=0, atol=1e-12 * max(1.0, np.abs(M0).max())):
        raise InvalidArgument("M0 must be Hermitian")
    ev = np.linalg.eigvalsh(0.5 * (M0 + M0.conj().T))
    c0 = float(ev[0])
    if not c0 > 0:
        raise NoCertificate(f"M0 has eigenvalue {c0:.3g}; need M0 >= c0 > 0", value=c0)
    U = comp.range_basis
    constant = isinstance(M1, Const) or not (callable(M1) or isinstance(M1, MaterialLaw))
    if isinstance(M1, MaterialLaw):
        fn = M1.evaluate
    elif callable(M1):
        fn = M1
    else:
        B = _dense(M1)
        fn = lambda z, B=B: B  # noqa: E731

    def compressed(z):
        B = _dense(fn(z))
        if B.shape == (1, 1) and U.shape[0] != 1:
            B = B[0, 0] * np.eye(U.shape[0])
        if B.shape != (U.shape[0], U.shape[0]):
            raise InvalidArgument(f"M1(z) has shape {B.shape}, expected {(U.shape[0],) * 2}")
        return U.conj().T @ B @ U

    if constant:
        pts = np.array([[0.0 + 0.0j]])
    elif math.isinf(rho1):
        raise InvalidArgument("a frequency-dependent M1 needs a finite rho1")
    else:
        pts = _half_plane_points(rho1, n_re, n_im)
    c1, sup = math.inf, 0.0
    for z in pts.ravel():
        B = compressed(complex(z))
        if not np.all(np.isfinite(B)):
            raise NoCertificate(f"M1 is not finite at z = {z}", witness=complex(z))
        lam = float(np.linalg.eigvalsh(0.5 * (B + B.conj().T))[0])
        if not lam > 0:
            raise NoCertificate(
                f"Re M1(z) has eigenvalue {lam:.3g} at z = {complex(z)}", witness=complex(z), value=lam
            )
        c1 = min(c1, lam)
        sup = max(sup, float(np.linalg.norm(B, 2)))
    return StabilitySetup(
        M0=M0,
        M1=compressed,
        C=comp,
        rho1=float(rho1),
        c0=c0,
        c1=c1,
        norm_M0=float(ev[-1]),
        sup_M1=sup,
        inv_norm_C=comp.inv_norm,
        n_samples=int(pts.size),
    )


def decay_rate_bound(s: StabilitySetup) -> float:
    """Guaranteed decay rate ``min(rho1, c1 / (sup|M1|^2 |M0| |C^-1|^2))``.

    Raises
    ------
    NoCertificate
        If a certified constant is not positive.
    """
    if not (s.c0 > 0 and s.c1 > 0 and s.rho1 > 0):
        raise NoCertificate("stability constants c0, c1, rho1 must be positive")
    rate = s.c1 / (s.sup_M1**2 * s.norm_M0 * s.inv_norm_C**2)
    return float(min(s.rho1, rate))


def heat_setup(space: SpaceGrid | None = None, a=1.0) -> StabilitySetup:
    """Dirichlet heat equation with conductivity ``a`` (scalar or per cell)."""
    space = space or SpaceGrid(0.0, 1.0, 64)
    C, _ = build_grad0_div(space)
    a = np.broadcast_to(np.asarray(a, dtype=complex), (space.m,))
    if not np.all(a.real > 0):
        raise InvalidArgument("conductivity needs Re a >= c > 0")
    return stability_setup(np.eye(space.m - 1), np.diag(1.0 / a), C)


def delay_rate_cap(c: float, a2_norm: float, h: float) -> float:
    """Largest admissible ``rho1`` for a delayed flux law: ``log(c / |a2|) / h``.

    Raises
    ------
    NoCertificate
        If ``|a2| >= c``.
    """
    if not h > 0:
        raise InvalidArgument("delay h must be positive")
    if not a2_norm < c:
        raise NoCertificate(f"delay coefficient norm {a2_norm:.3g} is not below c = {c:.3g}")
    if a2_norm == 0:
        return math.inf
    return math.log(c / a2_norm) / h


def delay_heat_setup(space: SpaceGrid | None = None, a1: float = 1.0, a2: float = 0.5, h: float = 0.5,
                     fraction: float = 0.5) -> StabilitySetup:
    """Dirichlet heat equation with flux law ``(a1 + a2 e^{-zh})^{-1}``.

    ``rho1`` is ``fraction`` times :func:`delay_rate_cap`.
    """
    if not 0 < fraction < 1:
        raise InvalidArgument("fraction must lie in (0, 1)")
    space = space or SpaceGrid(0.0, 1.0, 64)
    c = float(np.real(a1))
    cap = delay_rate_cap(c, abs(a2), h)
    rho1 = fraction * cap if math.isfinite(cap) else 1.0
    C, _ = build_grad0_div(space)
    law = lambda z: np.array([[1.0 / (a1 + a2 * np.exp(-z * h))]])  # noqa: E731
    return stability_setup(np.eye(space.m - 1), law, C, rho1=rho1)


def dpl_stability_law(s_q: float, s_theta: float) -> Callable:
    """Flux law ``(1 + s_q z) / (1 + s_theta z)``; ``Re >= s_q/s_theta`` on ``Re z > -1/s_theta``."""
    if not s_theta > s_q > 0:
        raise InvalidArgument("need s_theta > s_q > 0")
    return lambda z: np.array([[(1 + s_q * z) / (1 + s_theta * z)]])


def dpl_setup(space: SpaceGrid | None = None, s_q: float = 0.5, s_theta: float = 1.0,
              fraction: float = 0.5) -> StabilitySetup:
    """Dirichlet dual-phase-lag heat equation; ``rho1 = fraction / s_theta``."""
    if not 0 < fraction < 1:
        raise InvalidArgument("fraction must lie in (0, 1)")
    space = space or SpaceGrid(0.0, 1.0, 64)
    C, _ = build_grad0_div(space)
    return stability_setup(np.eye(space.m - 1), dpl_stability_law(s_q, s_theta), C,
                           rho1=fraction / s_theta)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit ``log|U(t)| ~ intercept - rate t``.

    ``band`` is the two-sided confidence interval of ``rate`` at level
    ``confidence``.
    """

    rate: float
    stderr: float
    band: tuple
    intercept: float
    window: tuple
    n_samples: int
    confidence: float


def _pointwise_norm(U) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(U, WeightedSignal):
        return U.times, np.linalg.norm(U.values, axis=1)
    t, v = U
    v = np.asarray(v)
    return np.asarray(t, dtype=float), (np.abs(v) if v.ndim == 1 else np.linalg.norm(v, axis=1))


def measure_decay(U, window: tuple, confidence: float = 0.95, floor: float = 1e3 * np.finfo(float).eps,
                  ) -> DecayFit:
    """Fit the exponential decay rate of ``|U(t)|`` on ``window``.

    Parameters
    ----------
    U : WeightedSignal or (t, values)
        Trajectory; the weight tag is ignored.
    window : (t_start, t_end)
    confidence : float
    floor : float
        Samples below ``floor`` times the largest sample in the window
        count as underflow.

    Raises
    ------
    UnderflowWindow
        If a sample in the window is below the floor.
    InvalidArgument
        If fewer than three samples fall in the window.
    """
    t, nrm = _pointwise_norm(U)
    lo, hi = window
    sel = (t >= lo) & (t <= hi)
    if np.count_nonzero(sel) < 3:
        raise InvalidArgument(f"window {window} holds fewer than three samples")
    w = nrm[sel]
    peak = float(np.max(w))
    if peak == 0.0 or np.any(w <= floor * peak):
        raise UnderflowWindow(
            f"samples in {window} fall below {floor:.1g} times the peak norm; shorten the window"
        )
    fit = stats.linregress(t[sel], np.log(w))
    k = int(np.count_nonzero(sel))
    q = float(stats.t.ppf(0.5 + 0.5 * confidence, k - 2)) if k > 2 else math.inf
    rate = -float(fit.slope)
    se = float(fit.stderr)
    return DecayFit(rate, se, (rate - q * se, rate + q * se), float(fit.intercept), (lo, hi), k, confidence)


@dataclass(frozen=True)
class ReweightedReport:
    """``|U|_{2,-rho}`` on windows ``[t_start, t_k]``.

    ``ratio`` is the fitted geometric ratio between consecutive increments
    of the squared norm over the later half of the windows; ``bounded``
    holds when it is below one, in which case ``limit`` extrapolates the
    geometric tail.
    """

    rho: float
    ends: np.ndarray
    norms: np.ndarray
    ratio: float
    limit: float
    bounded: bool


def reweighted_growth(U: WeightedSignal, rho: float, t_start: float = 0.0, t_end: float | None = None,
                      n_windows: int = 12, noise: float = 1e-6) -> ReweightedReport:
    """Re-weighted norms ``(int_{t_start}^{t_k} |U|^2 e^{2 rho t} dt)^{1/2}`` on growing windows.

    ``t_end`` defaults to the first time after ``t_start`` at which
    ``|U(t)|`` drops below ``noise`` times its peak on ``[t_start, t_start
    + T/2]``, which keeps the discretisation error of the trajectory out of
    the amplified tail.
    """
    t, nrm = _pointwise_norm(U)
    if t_end is None:
        half = (t >= t_start) & (t <= t_start + 0.5 * (t[-1] - t[0]))
        peak = float(np.max(nrm[half])) if np.any(half) else 0.0
        if peak == 0.0:
            raise UnderflowWindow("trajectory vanishes on the window")
        below = np.nonzero(half & (nrm < noise * peak))[0]
        t_end = float(t[below[0]] if below.size else t[half][-1])
    if not t_end > t_start:
        raise InvalidArgument("need t_end > t_start")
    dt = float(np.mean(np.diff(t)))
    sel = (t >= t_start) & (t <= t_end)
    dens = nrm[sel] ** 2 * np.exp(2.0 * rho * t[sel]) * dt
    cum = np.cumsum(dens)
    ends = np.linspace(t_start, t_end, n_windows + 1)[1:]
    idx = np.clip(np.searchsorted(t[sel], ends, side="right") - 1, 0, cum.size - 1)
    sq = cum[idx]
    inc = np.diff(np.concatenate([[0.0], sq]))
    tail = inc[n_windows // 2:]
    tail = tail[tail > 0]
    if tail.size >= 2:
        ratio = float(math.exp(stats.linregress(np.arange(tail.size), np.log(tail)).slope))
    else:
        ratio = 0.0
    bounded = ratio < 1.0
    limit = float(math.sqrt(sq[-1] + (inc[-1] * ratio / (1 - ratio) if bounded else math.inf)))
    return ReweightedReport(float(rho), ends, np.sqrt(sq), ratio, limit, bounded)


def counterexample_solution(grid: TimeGrid | None = None, nu: float = 0.25) -> WeightedSignal:
    """Solve ``d/dt u = 1_[0,1]``, whose solution settles at one and never decays."""
    grid = grid or make_grid(0.0, 1.0 / 64, 8192)
    t = grid.times
    f = ((t >= 0) & (t <= 1)).astype(float)
    f[np.isclose(t, 0.0, atol=1e-12 * grid.dt) | np.isclose(t, 1.0, atol=1e-12 * grid.dt)] = 0.5
    F = WeightedSignal(grid, nu, f)
    return solve(EvoProblem(Const(1.0, 1), np.zeros((1, 1)), nu, F, name="counterexample")).U
