"""Staggered finite differences on an interval.

Layout on ``[a, b]`` with ``m`` cells of width ``h``:

* cell values live at the centres ``a + (i + 1/2) h``, ``i = 0..m-1``;
* node values live at ``a + j h``, ``j = 0..m``; fields with a boundary
  condition built in only carry the ``m - 1`` interior nodes.

The Dirichlet pair (``grad0``, ``div``) maps interior-node potentials to
cell fluxes; the Neumann pair (``div0``, ``grad``) maps interior-node fluxes
(zero normal flux at both ends) to cells.  In each pair the second operator
is the negative transpose of the first, so block operators built from a pair
are skew-Hermitian to the last bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import Degenerate, InvalidArgument

__all__ = [
    "SpaceGrid",
    "SpatialOperator",
    "CompressedOperator",
    "make_space",
    "build_grad0_div",
    "build_div0_grad",
    "build_periodic_grad",
    "skew_block",
    "robin_block",
    "range_compress",
    "trace_1d",
    "save_triplets",
]


@dataclass(frozen=True)
class SpaceGrid:
    a: float
    b: float
    m: int

    def __post_init__(self):
        if not self.b > self.a:
            raise InvalidArgument(f"need b > a, got [{self.a}, {self.b}]")
        if int(self.m) != self.m or self.m < 2:
            raise InvalidArgument(f"need at least 2 cells, got {self.m}")
        object.__setattr__(self, "m", int(self.m))

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.m

    @property
    def cells(self) -> np.ndarray:
        return self.a + self.h * (np.arange(self.m) + 0.5)

    @property
    def nodes(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.m + 1)

    @property
    def interior_nodes(self) -> np.ndarray:
        return self.nodes[1:-1]


def make_space(a: float, b: float, m: int) -> SpaceGrid:
    return SpaceGrid(a, b, m)


@dataclass(frozen=True, eq=False)
class SpatialOperator:
    """Sparse matrix with grid metadata.

    Parameters
    ----------
    matrix : sparse array
    kind : str
        One of ``grad0, div, div0, grad, grad_sharp, div_sharp, block``.
    grid : SpaceGrid
    adjoint_of : str, optional
        Kind of the partner operator when this one is ``-partner.T``.
    partner : sparse array, optional
        Negative adjoint of this operator (``-matrix.T``), present for
        registered pairs.
    """

    matrix: sp.csr_array
    kind: str
    grid: SpaceGrid
    adjoint_of: str | None = None
    partner: sp.csr_array | None = None

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def paired(self) -> bool:
        return self.partner is not None

    def __matmul__(self, x):
        return self.matrix @ x

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _bidiag(m: int, h: float) -> sp.csr_array:
    """``m x (m-1)`` difference ``(x_{i+1} - x_i)/h`` with zero end values."""
    rows = np.concatenate([np.arange(m - 1), np.arange(1, m)])
    cols = np.concatenate([np.arange(m - 1), np.arange(m - 1)])
    vals = np.concatenate([np.full(m - 1, 1.0 / h), np.full(m - 1, -1.0 / h)])
    return sp.csr_array(sp.coo_array((vals, (rows, cols)), shape=(m, m - 1)))


def _pair(D, kind, partner_kind, grid):
    Dt = sp.csr_array(-D.T)
    op = SpatialOperator(D, kind, grid, adjoint_of=partner_kind, partner=Dt)
    adj = SpatialOperator(Dt, partner_kind, grid, adjoint_of=kind, partner=D)
    return op, adj


def build_grad0_div(grid: SpaceGrid):
    """Dirichlet pair: ``grad0`` (interior nodes -> cells) and ``div = -grad0.T``."""
    return _pair(_bidiag(grid.m, grid.h), "grad0", "div", grid)


def build_div0_grad(grid: SpaceGrid):
    """Neumann pair: ``div0`` (interior nodes -> cells) and ``grad = -div0.T``."""
    return _pair(_bidiag(grid.m, grid.h), "div0", "grad", grid)


def build_periodic_grad(grid: SpaceGrid) -> SpatialOperator:
    """Periodic forward difference ``(u_{i+1} - u_i)/h`` on cells.

    The ``exp(2 pi i x)`` mode is an eigenvector with eigenvalue
    ``(exp(2 pi i h) - 1)/h`` when ``b - a = 1``.
    """
    m, h = grid.m, grid.h
    D = sp.diags([-np.ones(m), np.ones(m - 1)], [0, 1], shape=(m, m)).tolil()
    D[m - 1, 0] = 1.0
    D = sp.csr_array(D.tocsr() / h)
    op, _ = _pair(D, "grad_sharp", "div_sharp", grid)
    return op


def periodic_pair(grid: SpaceGrid):
    """``(grad_sharp, div_sharp)`` with ``div_sharp = -grad_sharp.T``."""
    g = build_periodic_grad(grid)
    return g, SpatialOperator(g.partner, "div_sharp", grid, adjoint_of="grad_sharp", partner=g.matrix)


def skew_block(C: SpatialOperator) -> SpatialOperator:
    """``[[0, -C.T], [C, 0]]`` acting on ``(x, y)`` with ``x`` in the domain of ``C``.

    Raises
    ------
    InvalidArgument
        If ``C`` does not come from a registered pair.
    """
    if not C.paired:
        raise InvalidArgument("skew_block needs an operator paired with its adjoint")
    A = sp.block_array([[None, C.partner], [C.matrix, None]], format="csr")
    return SpatialOperator(sp.csr_array(A, dtype=complex), "block", C.grid)


def robin_block(grid: SpaceGrid, beta: complex = 1j, end: str = "right", allow_general: bool = False):
    """Heat-type block ``[[R, div0], [grad, 0]]`` with a Robin end condition.

    The boundary flux is eliminated through ``q(end) n + beta u(end) = 0``
    with the end value of ``u`` taken from the adjacent cell, which adds
    ``-beta/h`` to the corresponding diagonal entry.  ``beta = 1j`` keeps the
    block skew-Hermitian; other values with ``Re beta <= 0`` need
    ``allow_general`` and give an accretive block.
    """
    beta = complex(beta)
    if beta != 1j and not allow_general:
        raise InvalidArgument("beta other than 1j requires allow_general=True")
    if beta != 1j and beta.real > 0:
        raise InvalidArgument("Robin coefficient needs Re beta <= 0")
    div0, grad = build_div0_grad(grid)
    A = skew_block(grad).matrix.tolil()
    idx = {"right": grid.m - 1, "left": 0}
    if end not in idx and end != "both":
        raise InvalidArgument(f"end must be 'left', 'right' or 'both', got {end!r}")
    for e in (("left", "right") if end == "both" else (end,)):
        i = idx[e]
        A[i, i] = A[i, i] - beta / grid.h
    return SpatialOperator(sp.csr_array(A.tocsr()), "block", grid)


@dataclass(frozen=True, eq=False)
class CompressedOperator:
    """``C`` restricted to ``(ker C)^perp -> ran C`` in orthonormal bases.

    Attributes
    ----------
    range_basis, domain_basis : ndarray
        Orthonormal bases ``U_r`` and ``V_r``.
    matrix : ndarray
        ``U_r^* C V_r``; invertible.
    sigma : ndarray
        Retained singular values, descending.
    """

    range_basis: np.ndarray
    domain_basis: np.ndarray
    matrix: np.ndarray
    sigma: np.ndarray

    @property
    def sigma_min(self) -> float:
        return float(self.sigma[-1])

    @property
    def sigma_max(self) -> float:
        return float(self.sigma[0])

    @property
    def inv_norm(self) -> float:
        return 1.0 / self.sigma_min

    @property
    def rank(self) -> int:
        return self.sigma.size

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)


def range_compress(C, rank_tol: float = 1e-10) -> CompressedOperator:
    """Compress ``C`` to its range via the SVD (rank cutoff ``rank_tol * sigma_max``)."""
    M = C.matrix.toarray() if isinstance(C, SpatialOperator) else (
        C.toarray() if sp.issparse(C) else np.asarray(C)
    )
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise Degenerate("operator has no range")
    r = int(np.sum(s > rank_tol * s[0]))
    Ur, Vr = U[:, :r], Vh[:r].conj().T
    return CompressedOperator(Ur, Vr, Ur.conj().T @ M @ Vr, s[:r])


def trace_1d(u, end: str, layout: str = "cells") -> complex:
    """Endpoint value of a grid function.

    Parameters
    ----------
    u : array_like
    end : {'left', 'right'}
    layout : {'cells', 'nodes', 'interior'}
        ``cells`` extrapolates linearly from the two end cells, ``nodes``
        returns the end node value, ``interior`` extrapolates from the two
        end interior nodes.
    """
    u = np.asarray(u)
    if end not in ("left", "right"):
        raise InvalidArgument(f"end must be 'left' or 'right', got {end!r}")
    if layout == "nodes":
        return complex(u[0] if end == "left" else u[-1])
    v = u if end == "left" else u[::-1]
    if v.size < 2:
        return complex(v[0])
    if layout == "cells":
        return complex(1.5 * v[0] - 0.5 * v[1])
    if layout == "interior":
        return complex(2.0 * v[0] - v[1])
    raise InvalidArgument(f"unknown layout {layout!r}")


def save_triplets(op, path) -> None:
    """Write ``row, col, re, im`` for every stored entry."""
    M = op.matrix if isinstance(op, SpatialOperator) else op
    c = sp.coo_array(M)
    order = np.lexsort((c.col, c.row))
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "re", "im"])
        for k in order:
            v = complex(c.data[k])
            w.writerow([int(c.row[k]), int(c.col[k]), repr(v.real), repr(v.imag)])
