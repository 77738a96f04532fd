"""Catalog of model problems and the inhomogeneous Neumann lift.

Every preset returns a :class:`PresetTemplate`: material law, block
operator, state layout and a certified rate.  All blocks are built as
``skew_block(C)`` so the state is ``(x, y)`` with ``x`` in the domain of the
spatial operator ``C``:

=============  ===============================  ===========================
preset         state                             law ``M(z)``
=============  ===============================  ===========================
heat           (theta, q)                        ``diag(1, z^-1 a^-1)``
wave           (v, q), ``q = -T grad u``         ``diag(rho, T^-1)``
maxwell1d      (E, H)                            ``diag(eps, mu) + z^-1 diag(sigma, 0)``
mixed          (v, q)                            ``diag(1, s/T) + z^-1 diag(0, (1-s)/a)``
dpl            (theta, q), Neumann               dual-phase-lag flux law
delay-heat     (theta, q), Neumann               ``z^-1 (a + b e^{-zh})^-1`` on q
frac-elastic   (v, q)                            ``diag(rho, z^-alpha D^-1)``
robin-heat     (theta, q), Robin right end       heat law, accretive block
memory-heat    (theta, q)                        ``z^-1 (1 - k^(z))^-1 a^-1`` on q
=============  ===============================  ===========================

Dirichlet layouts put ``x`` on the interior nodes and ``y`` on cells;
Neumann layouts put ``x`` on cells and ``y`` on interior nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument
from .fourier import Spectrum, forward, inverse
from .material import (
    Block,
    Const,
    FracPow,
    Inverse,
    KernelLT,
    MaterialLaw,
    PositivityCertificate,
    Product,
    Sampling,
    Scale,
    Sum,
    ZInvPow,
    delay_inverse,
)
from .signal import TimeGrid, WeightedSignal, support_mass
from .solver import EvoProblem, EvoSolution, recommend_nu, solve
from .spatial import (
    SpaceGrid,
    SpatialOperator,
    build_div0_grad,
    build_grad0_div,
    robin_block,
    skew_block,
    trace_1d,
)
from .timeops import SampledKernel, kernel_l1_norm

__all__ = ["PRESETS", "PresetTemplate", "preset", "solve_neumann_bvp", "memory_inverse"]

PRESETS = (
    "heat",
    "wave",
    "maxwell1d",
    "mixed",
    "dpl",
    "delay-heat",
    "frac-elastic",
    "robin-heat",
    "memory-heat",
)


@dataclass(frozen=True, eq=False)
class PresetTemplate:
    """Assembled model problem without a forcing.

    Attributes
    ----------
    name : str
    M : MaterialLaw
    A : SpatialOperator
    space : SpaceGrid
    layout : dict
        Component name to slice of the state vector.
    coords : dict
        Component name to sample positions.
    nu : float
        Smallest doubling-search rate with a positivity certificate.
    certificate : PositivityCertificate
    M0, M1 : sparse arrays or None
        Set when ``M(z) = M0 + z^-1 M1`` (needed for initial value problems).
    accretive : bool
    bc : str
    params : dict
    """

    name: str
    M: MaterialLaw
    A: SpatialOperator
    space: SpaceGrid
    layout: dict
    coords: dict
    nu: float
    certificate: PositivityCertificate
    M0: object = None
    M1: object = None
    accretive: bool = False
    bc: str = "dirichlet"
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.M.dim

    def problem(self, F: WeightedSignal, nu: float | None = None, wrap_tol: float = 1e-12) -> EvoProblem:
        return EvoProblem(
            self.M, self.A, self.nu if nu is None else nu, F, self.accretive, wrap_tol, self.name
        )

    def rate_for(self, grid: TimeGrid, wrap_tol: float = 1e-12) -> float:
        """Recommended rate including the wrap requirement ``exp(-nu T) < wrap_tol``."""
        return recommend_nu(self.M, grid.T, wrap_tol)[0]

    def forcing(self, grid: TimeGrid, nu: float, **components) -> WeightedSignal:
        """Assemble a forcing from per-component callables ``f(t, x)``.

        Each keyword names a component of :attr:`layout`; the callable gets
        the time samples as a column and the positions as a row.
        """
        vals = np.zeros((grid.n, self.dim), dtype=complex)
        t = grid.times[:, None]
        for name, fn in components.items():
            if name not in self.layout:
                raise InvalidArgument(f"{self.name} has no component {name!r}")
            x = self.coords[name][None, :]
            vals[:, self.layout[name]] = np.broadcast_to(fn(t, x), (grid.n, x.shape[1]))
        return WeightedSignal(grid, nu, vals)

    def state(self, **components) -> np.ndarray:
        """Assemble a state vector from per-component callables ``f(x)``."""
        out = np.zeros(self.dim, dtype=complex)
        for name, fn in components.items():
            out[self.layout[name]] = fn(self.coords[name])
        return out

    def split(self, values) -> dict:
        v = np.asarray(values)
        return {k: v[..., s] for k, s in self.layout.items()}


def _field(val, n, name, positive=False):
    arr = np.asarray(val, dtype=complex)
    if arr.ndim == 0:
        arr = np.full(n, complex(arr))
    elif callable(val):
        raise InvalidArgument(f"{name} must be numeric")
    if arr.shape != (n,):
        raise InvalidArgument(f"{name} must be scalar or have {n} entries, got shape {arr.shape}")
    if positive and not np.all(arr.real > 0):
        raise InvalidArgument(f"{name} needs Re {name} >= c > 0 (uniform positivity)")
    return arr


def _layouts(space, bc, names):
    m = space.m
    x, y = names
    if bc == "dirichlet":
        C, _ = build_grad0_div(space)
        layout = {x: slice(0, m - 1), y: slice(m - 1, 2 * m - 1)}
        coords = {x: space.interior_nodes, y: space.cells}
        nx, ny = m - 1, m
    elif bc == "neumann":
        _, C = build_div0_grad(space)
        layout = {x: slice(0, m), y: slice(m, 2 * m - 1)}
        coords = {x: space.cells, y: space.interior_nodes}
        nx, ny = m, m - 1
    else:
        raise InvalidArgument(f"bc must be 'dirichlet' or 'neumann', got {bc!r}")
    return C, layout, coords, nx, ny


def _diag2(d1, d2):
    return sp.csr_array(sp.diags(np.concatenate([d1, d2]).astype(complex)))


def memory_inverse(kernel: SampledKernel, dim: int) -> Inverse:
    """``(1 - k^(z))**(-1) I`` with onset where ``||k||_{L1,nu} < 1``."""
    lo, hi = -50.0, 50.0
    if kernel_l1_norm(kernel, hi) >= 1:
        raise InvalidArgument("kernel L1 norm does not drop below 1 for any moderate rate")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if kernel_l1_norm(kernel, mid) < 1:
            hi = mid
        else:
            lo = mid
    child = Sum([Const(1.0, dim), Scale(-1.0, KernelLT(kernel, 1.0, dim))])
    return Inverse(child, onset=hi)


def preset(name: str, space: SpaceGrid | None = None, sampling: Sampling | None = None, **params) -> PresetTemplate:
    """Assemble a named model problem.

    Parameters
    ----------
    name : str
        One of :data:`PRESETS`.
    space : SpaceGrid, optional
        Defaults to 64 cells on ``[0, 1]``.
    **params
        Preset parameters (see the module table); unknown names raise.

    Raises
    ------
    InvalidArgument
        If a parameter violates the hypothesis the preset relies on.
    """
    space = space or SpaceGrid(0.0, 1.0, 64)
    builder = _BUILDERS.get(name)
    if builder is None:
        raise InvalidArgument(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    parts = builder(space, dict(params))
    nu, cert = recommend_nu(parts["M"], sampling=sampling)
    return PresetTemplate(name=name, space=space, nu=nu, certificate=cert, **parts)


def _take(params, allowed):
    unknown = set(params) - set(allowed)
    if unknown:
        raise InvalidArgument(f"unknown parameters {sorted(unknown)}")
    return {k: params.get(k, v) for k, v in allowed.items()}


def _heat(space, params):
    p = _take(params, {"a": 1.0, "bc": "dirichlet"})
    C, layout, coords, nx, ny = _layouts(space, p["bc"], ("theta", "q"))
    a = _field(p["a"], ny, "a", positive=True)
    M0 = _diag2(np.ones(nx), np.zeros(ny))
    M1 = _diag2(np.zeros(nx), 1.0 / a)
    M = Const(M0) + ZInvPow(1, M1)
    return dict(M=M, A=skew_block(C), layout=layout, coords=coords, M0=M0, M1=M1, bc=p["bc"], params=p)


def _wave(space, params):
    p = _take(params, {"T": 1.0, "rho": 1.0, "bc": "dirichlet"})
    C, layout, coords, nx, ny = _layouts(space, p["bc"], ("v", "q"))
    T = _field(p["T"], ny, "T", positive=True)
    rho = _field(p["rho"], nx, "rho", positive=True)
    M0 = _diag2(rho, 1.0 / T)
    M1 = _diag2(np.zeros(nx), np.zeros(ny))
    return dict(M=Const(M0) + ZInvPow(1, M1), A=skew_block(C), layout=layout, coords=coords,
                M0=M0, M1=M1, bc=p["bc"], params=p)


def _maxwell(space, params):
    p = _take(params, {"eps": 1.0, "mu": 1.0, "sigma": 0.0, "bc": "dirichlet"})
    C, layout, coords, nx, ny = _layouts(space, p["bc"], ("E", "H"))
    eps = _field(p["eps"], nx, "eps")
    sigma = _field(p["sigma"], nx, "sigma")
    mu = _field(p["mu"], ny, "mu", positive=True)
    if np.any(eps.imag != 0) or np.any(eps.real < 0):
        raise InvalidArgument("eps must be real and nonnegative")
    if np.any((eps.real == 0) & (sigma.real <= 0)):
        raise InvalidArgument("where eps = 0 the conductivity needs Re sigma >= c > 0 (eddy current)")
    M0 = _diag2(eps, mu)
    M1 = _diag2(sigma, np.zeros(ny))
    return dict(M=Const(M0) + ZInvPow(1, M1), A=skew_block(C), layout=layout, coords=coords,
                M0=M0, M1=M1, bc=p["bc"], params=p)


def _mixed(space, params):
    p = _take(params, {"s": 0.5, "a": 1.0, "T": 1.0, "bc": "dirichlet"})
    C, layout, coords, nx, ny = _layouts(space, p["bc"], ("v", "q"))
    s = _field(p["s"], ny, "s").real
    if np.any((s < 0) | (s > 1)):
        raise InvalidArgument("switch s must take values in [0, 1]")
    a = _field(p["a"], ny, "a", positive=True)
    T = _field(p["T"], ny, "T", positive=True)
    M0 = _diag2(np.ones(nx), s / T)
    M1 = _diag2(np.zeros(nx), (1 - s) / a)
    return dict(M=Const(M0) + ZInvPow(1, M1), A=skew_block(C), layout=layout, coords=coords,
                M0=M0, M1=M1, bc=p["bc"], params=p)


def dpl_flux_law(s_q: float, s_theta: float, a, dim: int) -> MaterialLaw:
    """``(z^-1 + s_q + s_q^2 z / 2) / (1 + s_theta z) a^-1`` written in powers of ``z^-1``."""
    ainv = 1.0 / np.asarray(a, dtype=complex)
    num = Sum([ZInvPow(2, ainv), ZInvPow(1, s_q * ainv), Const(0.5 * s_q**2 * ainv)])
    den = Inverse(Sum([ZInvPow(1, 1.0, dim), Const(s_theta, dim)]))
    return Product([num, den])


def _dpl(space, params):
    p = _take(params, {"s_q": 0.5, "s_theta": 1.0, "a": 1.0, "bc": "neumann"})
    if p["s_q"] == 0:
        raise InvalidArgument("dual phase lag needs s_q != 0")
    if not p["s_theta"] > 0:
        raise InvalidArgument("dual phase lag needs s_theta > 0")
    C, layout, coords, nx, ny = _layouts(space, p["bc"], ("theta", "q"))
    a = _field(p["a"], ny, "a", positive=True)
    M = Block([[Const(np.ones(nx)), None], [None, dpl_flux_law(p["s_q"], p["s_theta"], a, ny)]])
    return dict(M=M, A=skew_block(C), layout=layout, coords=coords, bc=p["bc"], params=p)


def _delay_heat(space, params):
    p = _take(params, {"a": 1.0, "b": 0.5, "h": 0.5, "bc": "neumann"})
    C, layout, coords, nx, ny = _layouts(space, p["bc"], ("theta", "q"))
    a = _field(p["a"], ny, "a", positive=True)
    b = _field(p["b"], ny, "b")
    if not p["h"] > 0:
        raise InvalidArgument("delay h must be positive")
    flux = Product([ZInvPow(1, 1.0, ny), delay_inverse(a, b, p["h"])])
    M = Block([[Const(np.ones(nx)), None], [None, flux]])
    return dict(M=M, A=skew_block(C), layout=layout, coords=coords, bc=p["bc"], params=p)


def _frac_elastic(space, params):
    p = _take(params, {"alpha": 0.75, "rho": 1.0, "D": 1.0, "bc": "dirichlet"})
    alpha = float(p["alpha"])
    if not (0.5 <= alpha <= 1.0):
        raise InvalidArgument("fractional elasticity needs alpha in [1/2, 1]")
    C, layout, coords, nx, ny = _layouts(space, p["bc"], ("v", "q"))
    rho = _field(p["rho"], nx, "rho", positive=True)
    D = _field(p["D"], ny, "D", positive=True)
    M = Block([[Const(rho), None], [None, FracPow(alpha, 1.0 / D)]])
    return dict(M=M, A=skew_block(C), layout=layout, coords=coords, bc=p["bc"], params=p)


def _robin_heat(space, params):
    p = _take(params, {"a": 1.0, "beta": 1j, "end": "right"})
    _, layout, coords, nx, ny = _layouts(space, "neumann", ("theta", "q"))
    a = _field(p["a"], ny, "a", positive=True)
    beta = complex(p["beta"])
    A = robin_block(space, beta, p["end"], allow_general=beta != 1j)
    M0 = _diag2(np.ones(nx), np.zeros(ny))
    M1 = _diag2(np.zeros(nx), 1.0 / a)
    return dict(M=Const(M0) + ZInvPow(1, M1), A=A, layout=layout, coords=coords, M0=M0, M1=M1,
                accretive=beta != 1j, bc="robin", params=p)


def _memory_heat(space, params):
    p = _take(params, {"kappa": 0.5, "decay": 1.0, "a": 1.0, "kernel_dt": 0.005,
                       "kernel_length": 30.0, "bc": "dirichlet"})
    if not p["decay"] > 0:
        raise InvalidArgument("kernel decay rate must be positive")
    if not abs(p["kappa"]) / p["decay"] < 1:
        raise InvalidArgument("memory kernel needs ||k||_L1 = |kappa|/decay < 1")
    C, layout, coords, nx, ny = _layouts(space, p["bc"], ("theta", "q"))
    a = _field(p["a"], ny, "a", positive=True)
    t = np.arange(0.0, p["kernel_length"], p["kernel_dt"])
    kern = SampledKernel(p["kernel_dt"], p["kappa"] * np.exp(-p["decay"] * t))
    flux = Product([ZInvPow(1, 1.0 / a), memory_inverse(kern, ny)])
    M = Block([[Const(np.ones(nx)), None], [None, flux]])
    return dict(M=M, A=skew_block(C), layout=layout, coords=coords, bc=p["bc"], params=p)


_BUILDERS = {
    "heat": _heat,
    "wave": _wave,
    "maxwell1d": _maxwell,
    "mixed": _mixed,
    "dpl": _dpl,
    "delay-heat": _delay_heat,
    "frac-elastic": _frac_elastic,
    "robin-heat": _robin_heat,
    "memory-heat": _memory_heat,
}


def _lift_profile(space: SpaceGrid, end: str, lift):
    x = (space.nodes - space.a) / (space.b - space.a)
    if callable(lift):
        prof = np.asarray(lift(x), dtype=float)
    elif lift == "linear":
        prof = x if end == "right" else 1.0 - x
    elif lift == "quadratic":
        prof = x**2 if end == "right" else (1.0 - x) ** 2
    else:
        raise InvalidArgument(f"unknown lift {lift!r}")
    # flux equals the outward normal datum at the chosen end and vanishes at the other
    sign = 1.0 if end == "right" else -1.0
    prof = sign * prof
    far = 0 if end == "right" else -1
    near = -1 if end == "right" else 0
    if abs(prof[far]) > 1e-12 or abs(prof[near] - sign) > 1e-12:
        raise InvalidArgument("lift profile must be 1 at the datum end and 0 at the other end")
    return prof


def solve_neumann_bvp(g, name: str = "heat", grid: TimeGrid | None = None, nu: float | None = None,
                      space: SpaceGrid | None = None, end: str = "right", lift="linear",
                      **params) -> EvoSolution:
    """Heat-type problem with prescribed outward normal flux ``g(t)`` at one end.

    A lift ``G(t, x) = g(t) psi(x)`` carrying the boundary flux is
    subtracted; the homogeneous problem for ``(u, r)`` with right-hand side
    ``d/dt M(d/dt)(0, -G) + (-div G, 0)`` is solved and ``(u, r + G)``
    returned.  The flux component of the result lives on all ``m + 1``
    nodes.

    Parameters
    ----------
    g : WeightedSignal (dim 1) or callable
        Causal boundary datum; a callable needs ``grid``.
    name : {'heat', 'dpl', 'delay-heat'}
    end : {'left', 'right'}
    lift : {'linear', 'quadratic'} or callable
        Lift profile on ``[0, 1]`` (rescaled to the interval).

    Raises
    ------
    InvalidArgument
        If ``g`` is not causal or the preset has no Neumann slot.
    """
    if name not in ("heat", "dpl", "delay-heat"):
        raise InvalidArgument(f"preset {name!r} has no Neumann trace slot")
    if end not in ("left", "right"):
        raise InvalidArgument("end must be 'left' or 'right'")
    space = space or SpaceGrid(0.0, 1.0, 64)
    tpl = preset(name, space, bc="neumann", **params)
    if callable(g):
        if grid is None:
            raise InvalidArgument("a callable datum needs a time grid")
        gvals = np.asarray(g(grid.times), dtype=complex).ravel()
        g = WeightedSignal(grid, nu or tpl.nu, gvals)
    grid = g.grid
    nu = nu if nu is not None else tpl.rate_for(grid)
    g = g.with_nu(nu)
    rep = support_mass(g, 0.0)
    if rep.pre_mass > 1e-28 * max(rep.total, 1e-300):
        raise InvalidArgument("boundary datum must be causal (supported in [0, inf))")
    m = space.m
    prof = _lift_profile(space, end, lift)
    gv = g.values[:, 0]
    G_all = gv[:, None] * prof[None, :]
    div_full = (G_all[:, 1:] - G_all[:, :-1]) / space.h
    th, qs = tpl.layout["theta"], tpl.layout["q"]
    lifted = np.zeros((grid.n, tpl.dim), dtype=complex)
    lifted[:, qs] = -G_all[:, 1:-1]
    spec = forward(WeightedSignal(grid, nu, lifted))
    rhs = np.empty_like(spec.coeffs)
    M = tpl.M
    for k, z in enumerate(spec.z):
        z = complex(z)
        if M.is_diagonal:
            rhs[k] = z * M._diag(z) * spec.coeffs[k]
        else:
            rhs[k] = z * (M._eval(z) @ spec.coeffs[k])
    F = inverse(Spectrum(nu, grid, rhs)).values.copy()
    F[:, th] -= div_full
    sol = solve(tpl.problem(WeightedSignal(grid, nu, F), nu))
    U = sol.U.values
    q = G_all.copy()
    q[:, 1:-1] += U[:, qs]
    out = np.concatenate([U[:, th], q], axis=1)
    idx = -1 if end == "right" else 0
    sign = 1.0 if end == "right" else -1.0
    node_err = float(np.max(np.abs(sign * q[:, idx] - gv)))
    t = grid.times
    # unweighted samples carry rounding amplified by exp(nu t); stay where that factor is <= 1e6,
    # and skip the initial boundary layer by using the later half of that span
    t_rel = min(t[-1], max(t[0], 0.0) + math.log(1e6) / nu)
    late = (t >= 0.5 * t_rel) & (t <= t_rel)
    if not late.any():
        late = t == t[-1]
    extrap = np.array([sign * trace_1d(qq[1:-1], end, layout="interior") for qq in q[late]])
    extras = {
        "trace_error": node_err,
        "trace_error_extrapolated": float(np.max(np.abs(extrap - gv[late]))) if late.any() else 0.0,
        "h": space.h,
        "layout": {"theta": (0, m), "q_nodes": (m, 2 * m + 1)},
    }
    return EvoSolution(WeightedSignal(grid, nu, out), sol.certificate, sol.residual,
                       sol.condition, sol.norm_ratio, nu, extras)
