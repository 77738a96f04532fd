"""Material laws: holomorphic matrix-valued functions of the frequency ``z``.

A law is an immutable expression tree.  Leaves are

* :class:`Const` ``B``
* :class:`ZInvPow` ``z**(-k) B``
* :class:`Series` ``sum_k z**(-k) B_k`` (valid for ``|z| > r``)
* :class:`Delay` ``exp(z h) B`` with ``h <= 0``
* :class:`FracPow` ``z**(-alpha) B`` (principal branch)
* :class:`KernelLT` ``(int_0^inf exp(-z t) k(t) dt) B`` by trapezoid quadrature

and the combinators :class:`Sum`, :class:`Product`, :class:`Scale`,
:class:`Block` and :class:`Inverse`.  Internally values are sparse so that
block-diagonal laws over fine spatial grids stay cheap.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, InvalidArgument, NoCertificate, NotInvertible, ShapeMismatch
from .fourier import forward, inverse, Spectrum
from .signal import WeightedSignal
from .timeops import SampledKernel

__all__ = [
    "MaterialLaw",
    "Const",
    "ZInvPow",
    "Series",
    "Delay",
    "FracPow",
    "KernelLT",
    "Sum",
    "Product",
    "Scale",
    "Block",
    "Inverse",
    "delay_inverse",
    "evaluate",
    "abscissa_estimate",
    "Sampling",
    "PositivityCertificate",
    "positivity_certificate",
    "hermitian_min",
    "shifted_positivity",
    "apply",
    "from_json",
    "to_json",
]


def _as_sparse(B, dim=None):
    """Coerce scalars, 1-D diagonals, dense or sparse matrices to CSR."""
    if sp.issparse(B):
        return sp.csr_array(B, dtype=complex)
    arr = np.asarray(B, dtype=complex)
    if arr.ndim == 0:
        if dim is None:
            raise InvalidArgument("scalar coefficient needs an explicit dim")
        return sp.csr_array(sp.identity(dim, dtype=complex) * arr)
    if arr.ndim == 1:
        return sp.csr_array(sp.diags(arr))
    if arr.ndim != 2:
        raise InvalidArgument("coefficients must be scalars, vectors or matrices")
    return sp.csr_array(arr)


def _is_diag(B) -> bool:
    c = B.tocoo()
    return bool(np.all(c.row == c.col))


class MaterialLaw:
    """Base class of material-law nodes."""

    shape: tuple

    @property
    def dim(self) -> int:
        if self.shape[0] != self.shape[1]:
            raise ShapeMismatch(f"law of shape {self.shape} is not square")
        return self.shape[0]

    # structure
    @property
    def is_diagonal(self) -> bool:
        return False

    def abscissa(self) -> float:
        raise NotImplementedError

    def _eval(self, z: complex):
        raise NotImplementedError

    def _diag(self, z: complex) -> np.ndarray:
        return self._eval(z).diagonal()

    def evaluate(self, z: complex) -> np.ndarray:
        return evaluate(self, z)

    def to_dict(self) -> dict:
        raise NotImplementedError

    # algebra
    def __add__(self, other):
        return Sum([self, other])

    def __matmul__(self, other):
        return Product([self, other])

    def __rmul__(self, lam):
        return Scale(lam, self)

    def __neg__(self):
        return Scale(-1.0, self)

    def __sub__(self, other):
        return Sum([self, Scale(-1.0, other)])


def _matrix_dict(B) -> dict:
    B = sp.csr_array(B)
    if _is_diag(B) and B.shape[0] == B.shape[1]:
        return {"diag": [_cplx(v) for v in B.diagonal()]}
    return {"matrix": [[_cplx(v) for v in row] for row in B.toarray()]}


def _cplx(v):
    v = complex(v)
    return v.real if v.imag == 0 else [v.real, v.imag]


class _Leaf(MaterialLaw):
    def __init__(self, B, dim=None):
        self.B = _as_sparse(B, dim)
        self.shape = self.B.shape
        self._diagB = _is_diag(self.B) and self.shape[0] == self.shape[1]

    @property
    def is_diagonal(self):
        return self._diagB

    def scalar(self, z):
        raise NotImplementedError

    def _eval(self, z):
        return self.B * self.scalar(z)

    def _diag(self, z):
        return self.B.diagonal() * self.scalar(z)


class Const(_Leaf):
    """Constant law ``B``."""

    def scalar(self, z):
        return 1.0

    def abscissa(self):
        return -math.inf

    def to_dict(self):
        return {"kind": "const", **_matrix_dict(self.B)}


class ZInvPow(_Leaf):
    """``z**(-k) B``."""

    def __init__(self, k: int, B, dim=None):
        if int(k) != k or k < 0:
            raise InvalidArgument(f"power must be a nonnegative integer, got {k}")
        self.k = int(k)
        super().__init__(B, dim)

    def scalar(self, z):
        if self.k and z == 0:
            raise DomainError("z**(-k) is undefined at z = 0")
        return z ** (-self.k)

    def abscissa(self):
        return 0.0 if self.k >= 1 and self.B.nnz else -math.inf

    def to_dict(self):
        return {"kind": "zinvpow", "k": self.k, **_matrix_dict(self.B)}


class Series(MaterialLaw):
    """Power series ``sum_k z**(-k) B_k`` converging for ``|z| > r``."""

    def __init__(self, coeffs, radius: float, dim=None):
        self.coeffs = [_as_sparse(B, dim) for B in coeffs]
        if not self.coeffs:
            raise InvalidArgument("series needs at least one coefficient")
        self.shape = self.coeffs[0].shape
        if any(B.shape != self.shape for B in self.coeffs):
            raise ShapeMismatch("series coefficients differ in shape")
        if radius < 0:
            raise InvalidArgument("radius must be nonnegative")
        self.radius = float(radius)
        if radius > 0:
            norms = [_norm(B) * radius ** (-k) for k, B in enumerate(self.coeffs)]
            if not np.isfinite(sum(norms)):
                raise InvalidArgument("series coefficients do not converge at the radius")

    @property
    def is_diagonal(self):
        return self.shape[0] == self.shape[1] and all(_is_diag(B) for B in self.coeffs)

    def _check(self, z):
        if abs(z) <= self.radius:
            raise DomainError(f"|z| = {abs(z)} inside the series radius {self.radius}")

    def _eval(self, z):
        self._check(z)
        w = 1.0 / z
        out = self.coeffs[-1]
        for B in reversed(self.coeffs[:-1]):
            out = B + out * w
        return sp.csr_array(out)

    def abscissa(self):
        return self.radius

    def to_dict(self):
        return {
            "kind": "series",
            "radius": self.radius,
            "coeffs": [_matrix_dict(B) for B in self.coeffs],
        }


class Delay(_Leaf):
    """``exp(z h) B``; a material law only for ``h <= 0``."""

    def __init__(self, h: float, B, dim=None):
        if h > 0:
            raise InvalidArgument("delay requires h <= 0 (positive shifts are not causal)")
        self.h = float(h)
        super().__init__(B, dim)

    def scalar(self, z):
        return np.exp(z * self.h)

    def abscissa(self):
        return -math.inf

    def to_dict(self):
        return {"kind": "delay", "h": self.h, **_matrix_dict(self.B)}


class FracPow(_Leaf):
    """``z**(-alpha) B`` on the principal branch."""

    def __init__(self, alpha: float, B, dim=None):
        if not (0.0 <= alpha <= 1.0):
            raise InvalidArgument(f"alpha must lie in [0, 1], got {alpha}")
        self.alpha = float(alpha)
        super().__init__(B, dim)

    def scalar(self, z):
        if self.alpha and z == 0:
            raise DomainError("z**(-alpha) is undefined at z = 0")
        return np.power(complex(z), -self.alpha)

    def abscissa(self):
        return 0.0 if self.alpha > 0 and self.B.nnz else -math.inf

    def to_dict(self):
        return {"kind": "fracpow", "alpha": self.alpha, **_matrix_dict(self.B)}


class KernelLT(_Leaf):
    """Laplace transform of a sampled causal kernel times ``B``.

    The integral is the composite trapezoid rule on the kernel grid;
    :meth:`transform` also returns a Richardson error estimate.
    """

    def __init__(self, kernel: SampledKernel, B=1.0, dim=1):
        self.kernel = kernel
        super().__init__(B, dim)

    def transform(self, z):
        k = self.kernel.values
        t = self.kernel.times
        dt = self.kernel.dt
        e = np.exp(-z * t) * k
        full = dt * (e.sum() - 0.5 * (e[0] + e[-1]))
        if k.size >= 5:
            sub = e[::2]
            half = 2 * dt * (sub.sum() - 0.5 * (sub[0] + sub[-1]))
            # coarse rule covers a slightly shorter interval when size is even
            err = abs(full - half) / 3.0
        else:
            err = math.nan
        return complex(full), float(err)

    def scalar(self, z):
        return self.transform(z)[0]

    def abscissa(self):
        """Heuristic exponential order of the kernel from its sample tail."""
        k = np.abs(self.kernel.values)
        t = self.kernel.times
        mask = k > 0
        if not np.any(mask):
            return -math.inf
        tail = np.arange(k.size) >= k.size // 2
        sel = mask & tail
        if sel.sum() < 2:
            return -math.inf
        slope = np.polyfit(t[sel], np.log(k[sel]), 1)[0]
        return float(slope)

    def to_dict(self):
        return {
            "kind": "kernel",
            "dt": self.kernel.dt,
            "k": [_cplx(v) for v in self.kernel.values],
            **_matrix_dict(self.B),
        }


def _norm(B) -> float:
    if B.shape[0] * B.shape[1] == 0:
        return 0.0
    if _is_diag(B):
        d = np.abs(B.diagonal())
        return float(d.max()) if d.size else 0.0
    return float(np.linalg.norm(B.toarray(), 2))


class Sum(MaterialLaw):
    def __init__(self, terms):
        self.terms = list(terms)
        if not self.terms:
            raise InvalidArgument("empty sum")
        self.shape = self.terms[0].shape
        if any(t.shape != self.shape for t in self.terms):
            raise ShapeMismatch("sum terms differ in shape")

    @property
    def is_diagonal(self):
        return all(t.is_diagonal for t in self.terms)

    def _eval(self, z):
        out = self.terms[0]._eval(z)
        for t in self.terms[1:]:
            out = out + t._eval(z)
        return sp.csr_array(out)

    def _diag(self, z):
        return sum(t._diag(z) for t in self.terms)

    def abscissa(self):
        return max(t.abscissa() for t in self.terms)

    def to_dict(self):
        return {"kind": "sum", "terms": [t.to_dict() for t in self.terms]}


class Product(MaterialLaw):
    """Matrix product ``M_1(z) M_2(z) ...``."""

    def __init__(self, factors):
        self.factors = list(factors)
        if not self.factors:
            raise InvalidArgument("empty product")
        for a, b in zip(self.factors, self.factors[1:]):
            if a.shape[1] != b.shape[0]:
                raise ShapeMismatch(f"cannot multiply shapes {a.shape} and {b.shape}")
        self.shape = (self.factors[0].shape[0], self.factors[-1].shape[1])

    @property
    def is_diagonal(self):
        return all(f.is_diagonal for f in self.factors)

    def _eval(self, z):
        out = self.factors[0]._eval(z)
        for f in self.factors[1:]:
            out = out @ f._eval(z)
        return sp.csr_array(out)

    def _diag(self, z):
        out = self.factors[0]._diag(z)
        for f in self.factors[1:]:
            out = out * f._diag(z)
        return out

    def abscissa(self):
        return max(f.abscissa() for f in self.factors)

    def to_dict(self):
        return {"kind": "product", "factors": [f.to_dict() for f in self.factors]}


class Scale(MaterialLaw):
    def __init__(self, lam, child: MaterialLaw):
        self.lam = complex(lam)
        self.child = child
        self.shape = child.shape

    @property
    def is_diagonal(self):
        return self.child.is_diagonal

    def _eval(self, z):
        return self.child._eval(z) * self.lam

    def _diag(self, z):
        return self.child._diag(z) * self.lam

    def abscissa(self):
        return self.child.abscissa() if self.lam != 0 else -math.inf

    def to_dict(self):
        return {"kind": "scale", "lambda": _cplx(self.lam), "child": self.child.to_dict()}


class Block(MaterialLaw):
    """Block matrix of laws; ``None`` entries are zero blocks."""

    def __init__(self, rows):
        self.rows = [list(r) for r in rows]
        nr, nc = len(self.rows), len(self.rows[0])
        if any(len(r) != nc for r in self.rows):
            raise ShapeMismatch("ragged block rows")
        heights = [None] * nr
        widths = [None] * nc
        for i, r in enumerate(self.rows):
            for j, M in enumerate(r):
                if M is None:
                    continue
                for store, idx, val in ((heights, i, M.shape[0]), (widths, j, M.shape[1])):
                    if store[idx] is None:
                        store[idx] = val
                    elif store[idx] != val:
                        raise ShapeMismatch("inconsistent block sizes")
        if None in heights or None in widths:
            raise ShapeMismatch("every block row and column needs one nonzero entry")
        self.heights, self.widths = heights, widths
        self.shape = (sum(heights), sum(widths))

    @property
    def is_diagonal(self):
        if len(self.rows) != len(self.rows[0]):
            return False
        for i, r in enumerate(self.rows):
            for j, M in enumerate(r):
                if i != j and M is not None:
                    return False
                if i == j and (M is None or not M.is_diagonal or self.heights[i] != self.widths[i]):
                    return False
        return True

    def _eval(self, z):
        blocks = [
            [M._eval(z) if M is not None else None for M in r] for r in self.rows
        ]
        for i in range(len(blocks)):
            for j in range(len(blocks[0])):
                if blocks[i][j] is None:
                    blocks[i][j] = sp.csr_array((self.heights[i], self.widths[j]), dtype=complex)
        return sp.csr_array(sp.block_array(blocks, format="csr"))

    def _diag(self, z):
        return np.concatenate([self.rows[i][i]._diag(z) for i in range(len(self.rows))])

    def abscissa(self):
        return max(M.abscissa() for r in self.rows for M in r if M is not None)

    def to_dict(self):
        return {
            "kind": "block",
            "rows": [[M.to_dict() if M is not None else None for M in r] for r in self.rows],
            "sizes": [self.heights, self.widths],
        }


class Inverse(MaterialLaw):
    """Pointwise inverse ``M(z)**(-1)``.

    Parameters
    ----------
    child : MaterialLaw
    onset : float, optional
        Rate beyond which invertibility is certified.  The abscissa of the
        node is ``max(child.abscissa(), onset)``.
    neumann : tuple, optional
        ``(a, b, h)`` for laws ``a + exp(z h) b``; evaluation then checks
        ``||b a^{-1}|| exp(Re z h) < 1`` at every point.
    """

    def __init__(self, child: MaterialLaw, onset: float = -math.inf, neumann=None):
        if child.shape[0] != child.shape[1]:
            raise ShapeMismatch("only square laws can be inverted")
        self.child = child
        self.shape = child.shape
        self.onset = float(onset)
        self.neumann = neumann

    @property
    def is_diagonal(self):
        return self.child.is_diagonal

    def _check(self, z):
        if self.neumann is not None:
            q, h = self.neumann
            if q * math.exp(z.real * h) >= 1.0:
                raise DomainError(
                    f"Neumann series for the delay inverse fails at z = {z} "
                    f"(||b a^-1|| e^(h Re z) = {q * math.exp(z.real * h):.3g})"
                )

    def _eval(self, z):
        self._check(z)
        C = self.child._eval(z)
        if self.child.is_diagonal:
            return sp.csr_array(sp.diags(self._inv_diag(C.diagonal(), z)))
        dense = C.toarray()
        try:
            inv = np.linalg.inv(dense)
        except np.linalg.LinAlgError as exc:
            raise NotInvertible(f"law is singular at z = {z}", z=z) from exc
        if not np.all(np.isfinite(inv)) or np.linalg.cond(dense) > 1e14:
            raise NotInvertible(f"law is numerically singular at z = {z}", z=z)
        return sp.csr_array(inv)

    @staticmethod
    def _inv_diag(d, z):
        if np.any(d == 0):
            raise NotInvertible(f"law is singular at z = {z}", z=z)
        return 1.0 / d

    def _diag(self, z):
        self._check(z)
        return self._inv_diag(self.child._diag(z), z)

    def abscissa(self):
        return max(self.child.abscissa(), self.onset)

    def to_dict(self):
        d = {"kind": "inverse", "child": self.child.to_dict()}
        if np.isfinite(self.onset):
            d["onset"] = self.onset
        return d


def delay_inverse(a, b, h: float, dim=None) -> Inverse:
    """``(a + b exp(-z h))**(-1)`` for a delay ``h > 0`` with a Neumann-series onset.

    The series ``sum (-a^{-1} b e^{-zh})^k a^{-1}`` converges for
    ``Re z > log(||b a^{-1}||)/h``; that bound is the attached onset.
    """
    if h <= 0:
        raise InvalidArgument("delay must be positive")
    A = _as_sparse(a, dim)
    Bm = _as_sparse(b, A.shape[0])
    Ad = A.toarray()
    try:
        q = float(np.linalg.norm(Bm.toarray() @ np.linalg.inv(Ad), 2))
    except np.linalg.LinAlgError as exc:
        raise NotInvertible("the instantaneous coefficient a must be invertible") from exc
    onset = math.log(q) / h if q > 0 else -math.inf
    child = Sum([Const(A), Delay(-h, Bm)])
    return Inverse(child, onset=onset, neumann=(q, -h) if q > 0 else None)


def abscissa_estimate(M: MaterialLaw) -> float:
    """Structural estimate of the abscissa of boundedness."""
    return M.abscissa()


def evaluate(M: MaterialLaw, z: complex) -> np.ndarray:
    """Dense value ``M(z)``.

    Examples
    --------
    >>> M = Const(1.0, dim=1) + ZInvPow(1, 3.0, dim=1)
    >>> complex(evaluate(M, 2.0)[0, 0])
    (2.5+0j)
    """
    z = complex(z)
    s = M.abscissa()
    if not z.real > s:
        raise DomainError(f"Re z = {z.real} is not right of the abscissa {s}")
    return M._eval(z).toarray()


def _eval_sparse(M: MaterialLaw, z: complex):
    return M._eval(complex(z))


# ---------------------------------------------------------------- positivity


@dataclass(frozen=True)
class Sampling:
    """Sample layout for positivity certificates.

    Parameters
    ----------
    n_line : int
        Number of imaginary parts sampled on ``Re z = nu0``.
    imag_max : float
        Largest ``|Im z|`` on the sampling lines.
    n_ray : int
        Imaginary samples on each of the extra lines ``Re z = 2 nu0`` and
        ``Re z = large``.
    large : float
        Real part of the far line (scaled by ``max(1, |nu0|)``).
    safety : float
        Reported ``c`` is ``safety * min`` of the sampled eigenvalues.
    extra : tuple of complex
        Additional explicit sample points.
    """

    n_line: int = 64
    imag_max: float = 1e4
    n_ray: int = 16
    large: float = 100.0
    safety: float = 0.9
    extra: tuple = ()

    def points(self, nu0: float) -> np.ndarray:
        half = max(self.n_line // 2, 1)
        ims = np.logspace(-2, np.log10(self.imag_max), half)
        line = np.concatenate([[0.0], ims, -ims])
        ray_ims = np.concatenate([[0.0], np.logspace(-1, np.log10(self.imag_max), self.n_ray // 2)])
        ray_ims = np.concatenate([ray_ims, -ray_ims[1:]])
        re_lines = [nu0]
        if nu0 > 0:
            re_lines.append(2 * nu0)
        re_lines.append(self.large * max(1.0, abs(nu0)))
        pts = [nu0 + 1j * line]
        for r in re_lines[1:]:
            pts.append(r + 1j * ray_ims)
        pts.append(np.asarray(self.extra, dtype=complex))
        return np.concatenate(pts)

    def spec(self) -> dict:
        return {
            "n_line": self.n_line,
            "imag_max": self.imag_max,
            "n_ray": self.n_ray,
            "large": self.large,
            "safety": self.safety,
            "n_extra": len(self.extra),
        }


@dataclass(frozen=True)
class PositivityCertificate:
    """Sampled lower bound ``c`` for ``Re z M(z)`` on ``Re z >= nu0``."""

    nu0: float
    c: float
    samples: tuple
    grid_spec: dict = field(default_factory=dict)

    @property
    def min_sampled(self) -> float:
        return min(v for _, v in self.samples)

    def to_dict(self) -> dict:
        worst = min(self.samples, key=lambda s: s[1])
        return {
            "nu0": self.nu0,
            "c": self.c,
            "n_samples": len(self.samples),
            "min_sampled": worst[1],
            "argmin": [worst[0].real, worst[0].imag],
            "sampling": self.grid_spec,
        }


def hermitian_min(B) -> float:
    """Smallest eigenvalue of ``(B + B^*)/2``."""
    if sp.issparse(B):
        if _is_diag(B):
            return float(np.min(B.diagonal().real))
        B = B.toarray()
    H = 0.5 * (B + B.conj().T)
    return float(np.linalg.eigvalsh(H)[0])


def zm_hermitian_min(M: MaterialLaw, z: complex) -> float:
    """``lambda_min(Re z M(z))`` using the diagonal fast path where possible."""
    if M.is_diagonal:
        return float(np.min((z * M._diag(z)).real))
    return hermitian_min(M._eval(z) * z)


def positivity_certificate(M: MaterialLaw, nu0: float, sampling: Sampling | None = None):
    """Certify ``Re <phi, z M(z) phi> >= c |phi|^2`` on sampled ``Re z >= nu0``.

    Raises
    ------
    DomainError
        If ``nu0`` is not right of the abscissa.
    NoCertificate
        If a sampled eigenvalue is not positive; the witness is attached.
    """
    sampling = sampling or Sampling()
    s = M.abscissa()
    if not nu0 > s:
        raise DomainError(f"nu0 = {nu0} is not right of the abscissa {s}")
    samples = []
    for z in sampling.points(nu0):
        z = complex(z)
        lam = zm_hermitian_min(M, z)
        samples.append((z, lam))
        if not lam > 0:
            raise NoCertificate(
                f"Re zM(z) has eigenvalue {lam:.3g} at z = {z}", witness=z, value=lam
            )
    lo = min(v for _, v in samples)
    return PositivityCertificate(float(nu0), sampling.safety * lo, tuple(samples), sampling.spec())


def shifted_positivity(N0, N1, c1_target: float, rank_tol: float = 1e-10) -> float:
    """Rate ``nu0`` with ``nu N0 + Re N1 >= c1_target`` for ``nu >= nu0``.

    ``N0`` must be Hermitian and positive on its range, ``Re N1`` must be
    bounded below by ``c1 > c1_target`` on ``ker N0``.  The returned rate is
    the constructive bound ``(c1_target + ||N1||^2/eps + ||N1||)/c0`` with
    ``eps = (c1 - c1_target)/2``.
    """
    N0 = np.asarray(N0, dtype=complex)
    N1 = np.asarray(N1, dtype=complex)
    if N0.shape != N1.shape or N0.shape[0] != N0.shape[1]:
        raise ShapeMismatch("N0 and N1 must be square of equal size")
    if not np.allclose(N0, N0.conj().T, atol=1e-12 * max(1.0, np.abs(N0).max())):
        raise InvalidArgument("N0 must be Hermitian")
    w, V = np.linalg.eigh(N0)
    scale = max(np.abs(w).max(), 1.0) if w.size else 1.0
    rng_mask = np.abs(w) > rank_tol * scale
    if np.any(w[rng_mask] < 0):
        raise NoCertificate("N0 is not positive on its range")
    ReN1 = 0.5 * (N1 + N1.conj().T)
    K = V[:, ~rng_mask]
    if K.shape[1]:
        c1 = float(np.linalg.eigvalsh(K.conj().T @ ReN1 @ K)[0])
        if not c1 > c1_target:
            raise NoCertificate(
                f"Re N1 on ker N0 is bounded below by {c1:.6g}, not above {c1_target}"
            )
    else:
        c1 = math.inf
    if not np.any(rng_mask):
        nu0 = 0.0
    else:
        c0 = float(w[rng_mask].min())
        n1 = float(np.linalg.norm(N1, 2))
        if math.isinf(c1):
            eps = math.inf
            nu0 = (c1_target + n1) / c0
            nu0 = max(nu0, 0.0)
        else:
            eps = (c1 - c1_target) / 2.0
            nu0 = (c1_target + n1**2 / eps + n1) / c0
        nu0 = nu0 * (1 + 1e-12) + 1e-300
    lam = float(np.linalg.eigvalsh(nu0 * N0 + ReN1)[0])
    if lam < c1_target - 1e-12 * max(1.0, abs(c1_target)):
        raise NoCertificate(f"eigen-check failed: lambda_min = {lam:.6g} < {c1_target}")
    return nu0


def apply(M: MaterialLaw, f: WeightedSignal) -> WeightedSignal:
    """Material-law operator ``M(d/dt)`` applied frequency by frequency."""
    s = M.abscissa()
    if not f.nu > s:
        raise DomainError(f"rate {f.nu} is not right of the abscissa {s}")
    if M.shape[1] != f.dim:
        raise ShapeMismatch(f"law acts on dimension {M.shape[1]}, signal has {f.dim}")
    spec = forward(f)
    zs = spec.z
    out = np.empty((f.grid.n, M.shape[0]), dtype=complex)
    if M.is_diagonal:
        for k, z in enumerate(zs):
            out[k] = M._diag(complex(z)) * spec.coeffs[k]
    else:
        for k, z in enumerate(zs):
            out[k] = M._eval(complex(z)) @ spec.coeffs[k]
    return inverse(Spectrum(f.nu, f.grid, out))


# ---------------------------------------------------------------- JSON


def _parse_number(v):
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
        return complex(v[0], v[1])
    if isinstance(v, str):
        return complex(v.replace(" ", ""))
    return complex(v)


def _parse_matrix(d: dict, dim):
    if "matrix" in d:
        return np.array([[_parse_number(x) for x in row] for row in d["matrix"]])
    if "diag" in d:
        return np.array([_parse_number(x) for x in d["diag"]])
    if "scalar" in d:
        n = d.get("dim", dim)
        if n is None:
            raise InvalidArgument("scalar coefficient needs 'dim'")
        return _as_sparse(_parse_number(d["scalar"]), int(n))
    n = d.get("dim", dim)
    if n is None:
        raise InvalidArgument("coefficient missing: give 'matrix', 'diag' or 'scalar' with 'dim'")
    return _as_sparse(1.0, int(n))


def from_json(obj, dim=None) -> MaterialLaw:
    """Parse a law from its JSON form (a dict or a JSON string).

    Grammar (``COEF`` is one of ``"matrix"``, ``"diag"`` or ``"scalar"`` +
    ``"dim"``; numbers are reals, ``[re, im]`` pairs or strings like
    ``"1+2j"``)::

        {"kind": "const", COEF}
        {"kind": "zinvpow", "k": int, COEF}
        {"kind": "series", "radius": r, "coeffs": [COEF, ...]}
        {"kind": "delay", "h": h <= 0, COEF}
        {"kind": "fracpow", "alpha": a, COEF}
        {"kind": "kernel", "dt": dt, "k": [...], COEF}
        {"kind": "sum", "terms": [LAW, ...]}
        {"kind": "product", "factors": [LAW, ...]}
        {"kind": "scale", "lambda": number, "child": LAW}
        {"kind": "block", "rows": [[LAW or null, ...], ...]}
        {"kind": "inverse", "child": LAW, "onset": rate (optional)}
        {"kind": "delay_inverse", "a": COEF, "b": COEF, "h": h > 0}
    """
    if isinstance(obj, str):
        obj = json.loads(obj)
    if not isinstance(obj, dict) or "kind" not in obj:
        raise InvalidArgument("material law JSON must be an object with a 'kind'")
    kind = obj["kind"]
    dim = obj.get("dim", dim)
    if kind == "const":
        return Const(_parse_matrix(obj, dim), dim)
    if kind == "zinvpow":
        return ZInvPow(obj["k"], _parse_matrix(obj, dim), dim)
    if kind == "series":
        return Series([_parse_matrix(c, dim) for c in obj["coeffs"]], obj.get("radius", 0.0), dim)
    if kind == "delay":
        return Delay(obj["h"], _parse_matrix(obj, dim), dim)
    if kind == "fracpow":
        return FracPow(obj["alpha"], _parse_matrix(obj, dim), dim)
    if kind == "kernel":
        if "csv" in obj:
            from .timeops import load_kernel_csv

            kern = load_kernel_csv(obj["csv"], dt=obj.get("dt"))
        else:
            kern = SampledKernel(float(obj["dt"]), [_parse_number(v) for v in obj["k"]])
        has_coef = any(key in obj for key in ("matrix", "diag", "scalar"))
        B = _parse_matrix(obj, dim) if has_coef else 1.0
        return KernelLT(kern, B, dim if dim is not None else 1)
    if kind == "sum":
        return Sum([from_json(t, dim) for t in obj["terms"]])
    if kind == "product":
        return Product([from_json(t, dim) for t in obj["factors"]])
    if kind == "scale":
        return Scale(_parse_number(obj["lambda"]), from_json(obj["child"], dim))
    if kind == "block":
        return Block([[from_json(M) if M is not None else None for M in r] for r in obj["rows"]])
    if kind == "inverse":
        return Inverse(from_json(obj["child"], dim), onset=obj.get("onset", -math.inf))
    if kind == "delay_inverse":
        return delay_inverse(
            _parse_matrix(obj["a"], dim), _parse_matrix(obj["b"], dim), obj["h"], dim
        )
    raise InvalidArgument(f"unknown material-law kind {kind!r}")


def to_json(M: MaterialLaw) -> str:
    return json.dumps(M.to_dict(), sort_keys=True)
