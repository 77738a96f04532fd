"""Sampled functions of time in exponentially weighted L2 spaces.

A :class:`WeightedSignal` stores ``n`` samples of an ``m``-vector valued
function on a uniform window ``[t0, t0 + n*dt)`` together with the weight
rate ``nu``.  Norms use the left-endpoint rule

.. math:: \\|f\\|_{2,\\nu}^2 = \\sum_j \\|f(t_j)\\|^2 e^{-2\\nu t_j}\\,dt .

Everything outside the window is treated as zero, so statements that hold on
the whole real line hold here up to a truncation residue of order
``exp(-nu*T)``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, ShapeMismatch

__all__ = [
    "TimeGrid",
    "WeightedSignal",
    "SupportReport",
    "make_grid",
    "signal",
    "from_function",
    "zeros",
    "weighted_inner",
    "weighted_norm",
    "exp_weight",
    "support_mass",
    "save_csv",
    "load_csv",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid ``t_j = t0 + j*dt``, ``j = 0..n-1``."""

    t0: float
    dt: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.dt) or self.dt <= 0:
            raise InvalidArgument(f"dt must be positive, got {self.dt}")
        if int(self.n) != self.n or self.n < 2:
            raise InvalidArgument(f"n must be an integer >= 2, got {self.n}")
        if not np.isfinite(self.t0):
            raise InvalidArgument("t0 must be finite")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def T(self) -> float:
        """Window length ``n*dt``."""
        return self.n * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    def index_of(self, t: float) -> int:
        """Index of the grid point nearest to ``t`` (clipped to the window)."""
        j = int(np.rint((t - self.t0) / self.dt))
        return min(max(j, 0), self.n)

    def steps(self, h: float, rtol: float = 1e-9) -> int:
        """Return ``h/dt`` as an integer or raise if ``h`` is off-grid."""
        s = h / self.dt
        k = int(np.rint(s))
        if abs(s - k) > rtol * max(1.0, abs(s)):
            raise InvalidArgument(f"h = {h} is not a multiple of dt = {self.dt}")
        return k


def make_grid(t0: float, dt: float, n: int) -> TimeGrid:
    """Build a :class:`TimeGrid`.

    Examples
    --------
    >>> make_grid(0.0, 1 / 256, 1024).T
    4.0
    """
    return TimeGrid(t0, dt, n)


@dataclass(frozen=True, eq=False)
class WeightedSignal:
    """Samples of an ``m``-vector valued function tagged with a weight rate.

    Parameters
    ----------
    grid : TimeGrid
    nu : float
        Weight rate of the space the signal is considered in.
    values : ndarray, shape (n, m)
        Complex samples; a 1-D array is promoted to ``m = 1``.
    """

    grid: TimeGrid
    nu: float
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.grid.n:
            raise ShapeMismatch(
                f"values must have shape (n={self.grid.n}, m), got {v.shape}"
            )
        if v.shape[1] < 1:
            raise ShapeMismatch("state dimension must be >= 1")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("signal samples must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "nu", float(self.nu))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def weights(self) -> np.ndarray:
        """Quadrature weights ``exp(-2 nu t_j) dt``."""
        return np.exp(-2.0 * self.nu * self.grid.times) * self.grid.dt

    def norm(self) -> float:
        return weighted_norm(self)

    def with_values(self, values) -> "WeightedSignal":
        return WeightedSignal(self.grid, self.nu, values)

    def with_nu(self, nu: float) -> "WeightedSignal":
        """Same samples considered in another weighted space."""
        return WeightedSignal(self.grid, nu, self.values)

    def component(self, idx) -> "WeightedSignal":
        return WeightedSignal(self.grid, self.nu, self.values[:, idx])

    def __add__(self, other):
        _check_compatible(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        _check_compatible(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, c):
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


@dataclass(frozen=True)
class SupportReport:
    """Split of the weighted squared norm at the cut time ``a``."""

    pre_mass: float
    post_mass: float
    a: float

    @property
    def total(self) -> float:
        return self.pre_mass + self.post_mass


def signal(grid: TimeGrid, nu: float, values) -> WeightedSignal:
    return WeightedSignal(grid, nu, values)


def from_function(grid: TimeGrid, nu: float, func) -> WeightedSignal:
    """Sample ``func(t)`` (vectorised over ``t``) on ``grid``.

    ``func`` may return shape ``(n,)`` or ``(n, m)``.
    """
    return WeightedSignal(grid, nu, np.asarray(func(grid.times)))


def zeros(grid: TimeGrid, nu: float, dim: int) -> WeightedSignal:
    return WeightedSignal(grid, nu, np.zeros((grid.n, dim), dtype=complex))


def _check_compatible(f: WeightedSignal, g: WeightedSignal) -> None:
    if f.grid != g.grid:
        raise ShapeMismatch("signals live on different grids")
    if f.nu != g.nu:
        raise ShapeMismatch(f"signals carry different rates {f.nu} and {g.nu}")
    if f.dim != g.dim:
        raise ShapeMismatch(f"signal dimensions differ: {f.dim} and {g.dim}")


def weighted_inner(f: WeightedSignal, g: WeightedSignal) -> complex:
    """Weighted inner product, conjugate-linear in ``f``.

    Examples
    --------
    >>> grid = make_grid(0.0, 0.25, 8)
    >>> f = from_function(grid, 0.0, lambda t: (t < 1).astype(float))
    >>> complex(weighted_inner(f, f))
    (1+0j)
    """
    _check_compatible(f, g)
    w = f.weights()
    return complex(np.sum(w * np.einsum("ij,ij->i", f.values.conj(), g.values)))


def weighted_norm(f: WeightedSignal) -> float:
    w = f.weights()
    return float(np.sqrt(np.sum(w * np.sum(np.abs(f.values) ** 2, axis=1))))


def exp_weight(f: WeightedSignal, direction: str = "forward", nu: float | None = None):
    """Unitary map ``f -> exp(-nu t) f`` between weighted and unweighted spaces.

    Parameters
    ----------
    f : WeightedSignal
    direction : {'forward', 'inverse'}
        ``forward`` multiplies by ``exp(-nu t)`` and retags with ``nu = 0``;
        ``inverse`` multiplies by ``exp(nu t)`` and retags with ``nu``.
    nu : float, optional
        Target rate for ``inverse`` (required there, since the input is
        tagged with 0).
    """
    t = f.grid.times
    if direction == "forward":
        return WeightedSignal(f.grid, 0.0, f.values * np.exp(-f.nu * t)[:, None])
    if direction == "inverse":
        if nu is None:
            raise InvalidArgument("inverse exp_weight needs the target rate nu")
        return WeightedSignal(f.grid, nu, f.values * np.exp(nu * t)[:, None])
    raise InvalidArgument(f"unknown direction {direction!r}")


def support_mass(f: WeightedSignal, a: float) -> SupportReport:
    """Split ``||f||^2`` into the mass before and after the grid point nearest ``a``."""
    j = f.grid.index_of(a)
    dens = f.weights() * np.sum(np.abs(f.values) ** 2, axis=1)
    return SupportReport(float(np.sum(dens[:j])), float(np.sum(dens[j:])), float(a))


def _header_path(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")


def save_csv(f: WeightedSignal, path) -> None:
    """Write samples to CSV and the grid header to ``<path>.json``."""
    path = Path(path)
    header = ["t"]
    for k in range(f.dim):
        header += [f"re_{k}", f"im_{k}"]
    rows = np.empty((f.grid.n, 1 + 2 * f.dim))
    rows[:, 0] = f.grid.times
    rows[:, 1::2] = f.values.real
    rows[:, 2::2] = f.values.imag
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])
    meta = {"t0": f.grid.t0, "dt": f.grid.dt, "n": f.grid.n, "nu": f.nu, "dim": f.dim}
    _header_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_csv(path) -> WeightedSignal:
    """Inverse of :func:`save_csv`."""
    path = Path(path)
    meta = json.loads(_header_path(path).read_text())
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    grid = make_grid(meta["t0"], meta["dt"], meta["n"])
    dim = int(meta["dim"])
    if data.shape != (grid.n, 1 + 2 * dim):
        raise ShapeMismatch(f"CSV body has shape {data.shape}, header expects ({grid.n}, {1 + 2 * dim})")
    values = data[:, 1::2] + 1j * data[:, 2::2]
    return WeightedSignal(grid, meta["nu"], values)
