"""Linear differential-algebraic equations ``d/dt M0 U + M1 U = 0``.

The quasi-Weierstrass form is computed without a Jordan form: with
``E = (lam M0 + M1)^{-1} M0`` a sorted complex Schur form puts the ``k``
eigenvalues of largest modulus first (``k = deg det(z M0 + M1)``), a
Sylvester solve removes the coupling block, and the remaining triangular
block is the nilpotent part.  A ratio of at least ``gap_min`` between the
kept and the discarded eigenvalue moduli is required; otherwise the split is
declared ambiguous.
"""

from __future__ import annotations

import json
import math
import warnings
from pathlib import Path
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (
    InconsistentInitialValue,
    InvalidArgument,
    NotRegular,
    NumericalAmbiguity,
    ShapeMismatch,
    ToleranceConflict,
)
from .fourier import forward
from .signal import TimeGrid, WeightedSignal

__all__ = [
    "MatrixPair",
    "PairSpectrum",
    "WeierstrassData",
    "WongData",
    "DAETrajectory",
    "IndexReport",
    "pair_spectrum",
    "pencil_degree",
    "is_regular",
    "weierstrass_form",
    "pair_index",
    "index_report",
    "wong_sequence",
    "wong_range",
    "consistent_subspace",
    "drazin",
    "drazin_index",
    "drazin_limit",
    "drazin_residuals",
    "dae_solve",
    "commuting_reduction",
    "laplace_solution_check",
    "rlc_pair",
    "rlc_reference",
    "example_pair",
    "load_pair",
    "subspace_distance",
]


@dataclass(frozen=True, eq=False)
class MatrixPair:
    """Square complex matrices ``(M0, M1)`` of equal size."""

    M0: np.ndarray
    M1: np.ndarray

    def __post_init__(self):
        M0 = np.array(self.M0, dtype=complex, ndmin=2)
        M1 = np.array(self.M1, dtype=complex, ndmin=2)
        if M0.ndim != 2 or M0.shape[0] != M0.shape[1]:
            raise ShapeMismatch(f"M0 must be square, got {M0.shape}")
        if M1.shape != M0.shape:
            raise ShapeMismatch(f"M1 has shape {M1.shape}, M0 has {M0.shape}")
        if not (np.all(np.isfinite(M0)) and np.all(np.isfinite(M1))):
            raise InvalidArgument("matrices must be finite")
        M0.setflags(write=False)
        M1.setflags(write=False)
        object.__setattr__(self, "M0", M0)
        object.__setattr__(self, "M1", M1)

    @property
    def n(self) -> int:
        return self.M0.shape[0]

    def pencil(self, z: complex) -> np.ndarray:
        return z * self.M0 + self.M1

    def resolvent(self, z: complex) -> np.ndarray:
        return np.linalg.inv(self.pencil(z))

    @property
    def commuting(self) -> bool:
        scale = max(np.linalg.norm(self.M0) * np.linalg.norm(self.M1), 1e-300)
        return np.linalg.norm(self.M0 @ self.M1 - self.M1 @ self.M0) <= 1e-10 * scale


def example_pair() -> MatrixPair:
    """``M0 = [[1, 1], [0, 0]]``, ``M1 = I`` with solution ``(x e^{-t}, 0)``."""
    return MatrixPair(np.array([[1.0, 1.0], [0.0, 0.0]]), np.eye(2))


def _complex_matrix(rows) -> np.ndarray:
    def entry(v):
        if isinstance(v, str):
            return complex(v.replace(" ", ""))
        if isinstance(v, (list, tuple)) and len(v) == 2:
            return complex(float(v[0]), float(v[1]))
        return complex(v)

    try:
        return np.array([[entry(v) for v in row] for row in rows], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise InvalidArgument(f"cannot parse matrix entries: {exc}") from exc


def load_pair(path) -> MatrixPair:
    """Read a pair from JSON or CSV.

    JSON holds ``{"M0": [[...]], "M1": [[...]]}`` with entries given as
    numbers, ``[re, im]`` lists or strings such as ``"1-2j"``.  CSV stacks
    ``M0`` on top of ``M1`` (``2n`` rows of ``n`` comma separated entries);
    blank lines and lines starting with ``#`` are skipped.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidArgument(f"cannot read pair file {str(path)!r}: {exc}") from exc
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"invalid JSON in {str(path)!r}: {exc}") from exc
        if not isinstance(data, dict) or "M0" not in data or "M1" not in data:
            raise InvalidArgument("pair JSON needs keys 'M0' and 'M1'")
        try:
            return MatrixPair(_complex_matrix(data["M0"]), _complex_matrix(data["M1"]))
        except ShapeMismatch as exc:
            raise InvalidArgument(str(exc)) from exc
    rows = [ln.split(",") for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    A = _complex_matrix(rows) if rows else np.zeros((0, 0))
    if A.ndim != 2 or A.shape[0] != 2 * A.shape[1] or A.shape[1] == 0:
        raise InvalidArgument(f"pair CSV must have 2n rows of n entries, got {A.shape}")
    n = A.shape[1]
    return MatrixPair(A[:n], A[n:])


def rlc_pair(R: float = 2.0, L: float = 1.0, C: float = 1.0) -> MatrixPair:
    """Series RLC loop with state ``(i, v_R, v_L, v_C)``.

    Rows: ``R i - v_R = 0``, ``L i' - v_L = 0``, ``C v_C' - i = 0`` and
    Kirchhoff's voltage law ``v_R + v_L + v_C = 0``.
    """
    if not (R > 0 and L > 0 and C > 0):
        raise InvalidArgument("R, L and C must be positive")
    M0 = np.zeros((4, 4))
    M0[1, 0] = L
    M0[2, 3] = C
    M1 = np.array(
        [[R, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [-1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 1.0, 1.0]]
    )
    return MatrixPair(M0, M1)


def rlc_reference(t, i0: float, vc0: float, R: float = 2.0, L: float = 1.0, C: float = 1.0) -> np.ndarray:
    """Closed form of the reduced ODE ``L i' = -R i - v_C``, ``C v_C' = i``.

    Returns rows ``(i, v_R, v_L, v_C)`` at the times ``t``.
    """
    t = np.asarray(t, dtype=float)
    A = np.array([[-R / L, -1.0 / L], [1.0 / C, 0.0]])
    w, V = np.linalg.eig(A)
    if abs(w[0] - w[1]) > 1e-8 * max(1.0, abs(w[0])):
        c = np.linalg.solve(V, np.array([i0, vc0], dtype=complex))
        x = (V[None, :, :] * (c * np.exp(np.outer(t, w)))[:, None, :]).sum(axis=2)
    else:
        # repeated root s: x(t) = e^{st} (x0 + t (A - s) x0)
        s = w[0]
        x0 = np.array([i0, vc0], dtype=complex)
        d = (A - s * np.eye(2)) @ x0
        x = np.exp(s * t)[:, None] * (x0[None, :] + t[:, None] * d[None, :])
    i, vc = x[:, 0], x[:, 1]
    vr = R * i
    vl = -vr - vc
    return np.stack([i, vr, vl, vc], axis=1)


def subspace_distance(A: np.ndarray, B: np.ndarray) -> float:
    """Largest principal angle between the column spaces (``pi/2`` if dimensions differ)."""
    if A.shape[1] != B.shape[1]:
        return math.pi / 2
    if A.shape[1] == 0:
        return 0.0
    return float(np.max(sla.subspace_angles(A, B)))


def _orth(A: np.ndarray, rtol: float) -> np.ndarray:
    if A.size == 0:
        return np.zeros((A.shape[0], 0), dtype=complex)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((A.shape[0], 0), dtype=complex)
    return U[:, s > rtol * s[0]]


def _null(A: np.ndarray, rtol: float, scale: float) -> np.ndarray:
    n = A.shape[1]
    _, s, Vh = np.linalg.svd(A)
    r = int(np.sum(s > rtol * scale)) if s.size else 0
    return Vh[r:].conj().T


def _sample_points(p: MatrixPair, count: int = 16, seed: int = 0):
    R = 1.0 + np.linalg.norm(p.M0, 2) + np.linalg.norm(p.M1, 2)
    rng = np.random.default_rng(seed)
    return R * np.exp(2j * np.pi * rng.random(count))


def is_regular(p: MatrixPair, seed: int = 0, rtol: float = 1e-12) -> bool:
    """Sample ``sigma_min(z M0 + M1)`` at 16 random points on a large circle."""
    for z in _sample_points(p, seed=seed):
        s = np.linalg.svd(p.pencil(z), compute_uv=False)
        if s[-1] > rtol * max(s[0], 1e-300):
            return True
    return False


def pencil_degree(p: MatrixPair, tol: float = 1e-8) -> int:
    """Degree of ``z -> det(z M0 + M1)`` by interpolation on the unit circle.

    The matrices are normalised first; coefficients below ``tol`` times the
    largest one count as zero.
    """
    n = p.n
    a = np.linalg.norm(p.M0, 2)
    b = np.linalg.norm(p.M1, 2)
    if a == 0:
        return 0
    A0 = p.M0 / a
    A1 = p.M1 / b if b > 0 else p.M1
    N = 2 * (n + 1)
    z = np.exp(2j * np.pi * np.arange(N) / N)
    vals = np.array([np.linalg.det(zz * A0 + A1) for zz in z])
    c = np.fft.fft(vals) / N
    mags = np.abs(c[: n + 1])
    if mags.max() == 0:
        raise NotRegular("det(z M0 + M1) vanishes identically")
    nz = np.nonzero(mags > tol * mags.max())[0]
    return int(nz[-1])


@dataclass(frozen=True)
class PairSpectrum:
    """Finite spectrum of a pair, or the whole-plane flag for irregular pairs."""

    values: np.ndarray
    whole_plane: bool
    degree: int | None


def pair_spectrum(p: MatrixPair, seed: int = 0) -> PairSpectrum:
    """Roots of ``det(z M0 + M1)`` from the generalized eigenproblem ``M1 v = z (-M0) v``."""
    if not is_regular(p, seed=seed):
        return PairSpectrum(np.zeros(0, dtype=complex), True, None)
    k = pencil_degree(p)
    if k == 0:
        return PairSpectrum(np.zeros(0, dtype=complex), False, 0)
    ab = sla.eig(p.M1, -p.M0, right=False, homogeneous_eigvals=True)
    alpha, beta = ab[0], ab[1]
    nrm = np.hypot(np.abs(alpha), np.abs(beta))
    finiteness = np.abs(beta) / np.maximum(nrm, 1e-300)
    order = np.argsort(-finiteness, kind="stable")[:k]
    vals = alpha[order] / beta[order]
    vals = vals[np.lexsort((vals.imag, vals.real))]
    return PairSpectrum(vals, False, k)


@dataclass(frozen=True, eq=False)
class WeierstrassData:
    """``P M0 Q = diag(I_k, N)`` and ``P M1 Q = diag(C, I)`` with ``N`` nilpotent.

    Attributes
    ----------
    P, Q : ndarray
    C : ndarray, shape (k, k)
    N : ndarray, shape (n - k, n - k)
        Strictly upper triangular, hence exactly nilpotent.
    k : int
    lam : complex
        Regular point used for the construction.
    gap : float
        Ratio of the smallest kept to the largest discarded eigenvalue modulus.
    residuals : dict
        ``m0``/``m1`` block residuals and ``nilpotent`` (``||N^ell||``).
    index : int
        Nilpotency degree of ``N`` (1 when ``N`` is empty).
    """

    P: np.ndarray
    Q: np.ndarray
    C: np.ndarray
    N: np.ndarray
    k: int
    lam: complex
    gap: float
    residuals: dict
    index: int

    @property
    def Qinv(self) -> np.ndarray:
        return np.linalg.inv(self.Q)


def _choose_lambda(p: MatrixPair, seed: int = 0):
    best, best_s = None, -1.0
    for z in _sample_points(p, seed=seed):
        s = np.linalg.svd(p.pencil(z), compute_uv=False)
        rel = s[-1] / max(s[0], 1e-300)
        if rel > best_s:
            best, best_s = z, rel
    if best_s <= 1e-12:
        raise NotRegular("z M0 + M1 is singular at every sampled point (sigma = C)")
    return complex(best)


def _split(E: np.ndarray, k: int, gap_min: float):
    """Sorted Schur split of ``E`` keeping the ``k`` largest-modulus eigenvalues first."""
    n = E.shape[0]
    mu = np.linalg.eigvals(E)
    mags = np.sort(np.abs(mu))[::-1]
    if 0 < k < n:
        hi, lo = mags[k - 1], mags[k]
        gap = hi / lo if lo > 0 else math.inf
        if gap < gap_min:
            raise ToleranceConflict(
                f"eigenvalue split ambiguous: kept {hi:.3g} vs discarded {lo:.3g} (gap {gap:.3g})",
                gap=gap,
            )
        cut = math.sqrt(hi * lo) if lo > 0 else 0.5 * hi
    elif k == n:
        gap, cut = math.inf, -1.0
    else:
        gap, cut = math.inf, math.inf
    T, Z, sdim = sla.schur(E, output="complex", sort=lambda x: abs(x) > cut)
    if sdim != k:
        raise ToleranceConflict(f"Schur reordering kept {sdim} eigenvalues, expected {k}", gap=gap)
    T11, T12, T22 = T[:k, :k], T[:k, k:], T[k:, k:]
    X = sla.solve_sylvester(T11, -T22, -T12) if 0 < k < n else np.zeros((k, n - k), complex)
    S = np.eye(n, dtype=complex)
    S[:k, k:] = X
    V = Z @ S
    Vinv = np.linalg.solve(S, Z.conj().T)
    return T11, T22, V, Vinv, gap


def _nilpotency(N: np.ndarray, tol: float) -> tuple[int, float]:
    m = N.shape[0]
    if m == 0:
        return 1, 0.0
    scale = max(1.0, np.linalg.norm(N, 2))
    Pk = np.eye(m, dtype=complex)
    for ell in range(1, m + 1):
        Pk = Pk @ N
        r = np.linalg.norm(Pk, 2)
        if r <= tol * scale**ell:
            return ell, float(r)
    return m, float(np.linalg.norm(Pk, 2))


def weierstrass_form(p: MatrixPair, tol: float = 1e-8, gap_min: float = 10.0, seed: int = 0) -> WeierstrassData:
    """Quasi-Weierstrass normal form with ``P = P3 P2 P1`` and ``Q = P2^{-1}``.

    Raises
    ------
    NotRegular
        If ``z M0 + M1`` is singular at every sampled ``z``.
    ToleranceConflict
        If the eigenvalue split of ``E`` is not separated by ``gap_min``.
    """
    lam = _choose_lambda(p, seed)
    n = p.n
    k = pencil_degree(p)
    P1 = np.linalg.inv(p.pencil(lam))
    E = P1 @ p.M0
    J, T22, V, Vinv, gap = _split(E, k, gap_min)
    # keep the Schur diagonal: a defective zero cluster has eigenvalues of size
    # eps^(1/index), yet powers of the full block are O(eps)
    Nt = T22
    P2, Q = Vinv, V
    Ik = np.eye(n - k, dtype=complex)
    B = Ik - lam * Nt
    P3 = sla.block_diag(np.linalg.inv(J) if k else np.zeros((0, 0)), np.linalg.inv(B))
    P = P3 @ P2 @ P1
    C = (np.linalg.inv(J) - lam * np.eye(k)) if k else np.zeros((0, 0), complex)
    N = np.linalg.solve(B, Nt)
    D0 = sla.block_diag(np.eye(k), N)
    D1 = sla.block_diag(C, Ik)
    ell, nil = _nilpotency(N, tol)
    res = {
        "m0": float(np.linalg.norm(P @ p.M0 @ Q - D0, 2)),
        "m1": float(np.linalg.norm(P @ p.M1 @ Q - D1, 2)),
        "nilpotent": nil,
    }
    return WeierstrassData(P, Q, C, N, k, lam, gap, res, ell)


@dataclass(frozen=True)
class IndexReport:
    index: int
    growth_index: int
    slope: float
    radii: tuple
    norms: tuple


def index_report(p: MatrixPair, wd: WeierstrassData | None = None, seed: int = 0) -> IndexReport:
    """Nilpotency degree and the resolvent-growth estimate of the index.

    ``||(z M0 + M1)^{-1}||`` is sampled on radii ``r * 10^j`` (``j = 1..4``,
    ``r`` the spectral radius of the pair, at least 1) at 8 phases; the
    log-log slope ``s`` over the three outer radii gives ``max(1, round(s) + 1)``.
    """
    wd = wd or weierstrass_form(p, seed=seed)
    spec = pair_spectrum(p, seed=seed)
    r = max(1.0, float(np.max(np.abs(spec.values))) if spec.values.size else 1.0)
    radii = tuple(r * 10.0**j for j in range(1, 5))
    phases = np.exp(2j * np.pi * (np.arange(8) + 0.5) / 8)
    norms = []
    for rad in radii:
        norms.append(max(np.linalg.norm(np.linalg.inv(p.pencil(rad * ph)), 2) for ph in phases))
    x = np.log(radii[1:])
    y = np.log(norms[1:])
    slope = float(np.polyfit(x, y, 1)[0])
    growth = max(1, int(round(slope)) + 1)
    return IndexReport(wd.index, growth, slope, radii, tuple(float(v) for v in norms))


def pair_index(p: MatrixPair, check: bool = True, seed: int = 0) -> int:
    """Index of a regular pair (nilpotency degree of ``N``; 1 for ODE pairs).

    Raises
    ------
    NumericalAmbiguity
        If the resolvent-growth cross-check disagrees.
    """
    wd = weierstrass_form(p, seed=seed)
    if not check:
        return wd.index
    rep = index_report(p, wd, seed)
    if rep.growth_index != rep.index:
        raise NumericalAmbiguity(
            f"nilpotency degree {rep.index} but resolvent growth suggests {rep.growth_index}",
            candidates=(rep.index, rep.growth_index),
        )
    return rep.index


@dataclass(frozen=True, eq=False)
class WongData:
    """Orthonormal bases of the Wong sequence ``IV_0 > IV_1 > ...``.

    ``stabilization`` is the first ``j`` with ``IV_j = IV_{j+1}``.
    """

    bases: tuple
    stabilization: int

    @property
    def dims(self) -> tuple:
        return tuple(b.shape[1] for b in self.bases)

    @property
    def limit(self) -> np.ndarray:
        return self.bases[-1]


def wong_sequence(p: MatrixPair, rtol: float = 1e-10, max_len: int | None = None) -> WongData:
    """``IV_{j+1} = M1^{-1}[M0[IV_j]]`` via SVD ranges and null spaces."""
    n = p.n
    max_len = max_len or n + 1
    scale = max(np.linalg.norm(p.M0, 2), np.linalg.norm(p.M1, 2), 1e-300)
    bases = [np.eye(n, dtype=complex)]
    for _ in range(max_len):
        B = bases[-1]
        R = _orth(p.M0 @ B, rtol)
        proj = np.eye(n) - R @ R.conj().T
        nxt = _null(proj @ p.M1, rtol, scale)
        bases.append(nxt)
        if nxt.shape[1] == B.shape[1]:
            break
    stab = len(bases) - 2 if bases[-1].shape[1] == bases[-2].shape[1] else len(bases) - 1
    return WongData(tuple(bases[: stab + 1]) if stab >= 0 else tuple(bases), max(stab, 0))


def wong_range(p: MatrixPair, j: int, z: complex | None = None, rtol: float = 1e-10) -> np.ndarray:
    """``ran(((z M0 + M1)^{-1} M0)^j)`` as an orthonormal basis."""
    z = _choose_lambda(p) if z is None else z
    E = np.linalg.solve(p.pencil(z), p.M0)
    return _orth(np.linalg.matrix_power(E, j), rtol)


def consistent_subspace(p: MatrixPair, check: bool = True, angle_tol: float = 1e-8,
                        wd: WeierstrassData | None = None) -> np.ndarray:
    """Orthonormal basis of ``Q (C^k x {0})``, cross-checked against the Wong limit.

    Raises
    ------
    NumericalAmbiguity
        If the two computations differ by more than ``angle_tol``.
    """
    wd = wd or weierstrass_form(p)
    k = wd.k
    if k == 0:
        B = np.zeros((p.n, 0), dtype=complex)
    else:
        B, _ = np.linalg.qr(wd.Q[:, :k])
    if check:
        W = wong_sequence(p).limit
        ang = subspace_distance(B, W)
        if ang > angle_tol:
            raise NumericalAmbiguity(
                f"Weierstrass and Wong consistent spaces differ (angle {ang:.3g})",
                candidates=(B, W),
            )
    return B


def drazin_index(E: np.ndarray, gap_min: float = 10.0, tol: float = 1e-8) -> int:
    """``ind(E, 1)`` in the sense of the nilpotent part of ``E`` (0 for invertible ``E``)."""
    E = np.asarray(E, dtype=complex)
    k = pencil_degree(MatrixPair(E, np.eye(E.shape[0])))
    if k == E.shape[0]:
        return 0
    _, T22, _, _, _ = _split(E, k, gap_min)
    return _nilpotency(T22, tol)[0]


def drazin(E, gap_min: float = 10.0) -> np.ndarray:
    """Drazin inverse by a core-nilpotent split of a sorted Schur form.

    ``E = V diag(J, N) V^{-1}`` with ``J`` invertible and ``N`` nilpotent gives
    ``E^D = V diag(J^{-1}, 0) V^{-1}``.

    Raises
    ------
    ToleranceConflict
        If core and nilpotent eigenvalues are not separated by ``gap_min``.
    """
    E = np.asarray(E, dtype=complex)
    if E.ndim != 2 or E.shape[0] != E.shape[1]:
        raise ShapeMismatch("E must be square")
    n = E.shape[0]
    if not np.any(E):
        return np.zeros_like(E)
    k = pencil_degree(MatrixPair(E, np.eye(n)))
    if k == 0:
        return np.zeros_like(E)
    J, _, V, Vinv, _ = _split(E, k, gap_min)
    D = np.zeros((n, n), dtype=complex)
    D[:k, :k] = np.linalg.inv(J)
    return V @ D @ Vinv


def drazin_limit(E, k: int | None = None, levels: int = 4) -> np.ndarray:
    """Independent Drazin inverse from ``lim_{eps -> 0} (E^{k+1} + eps)^{-1} E^k``.

    The limit is taken by Richardson extrapolation over ``eps, eps/2, ...``
    with ``eps`` small against the core eigenvalues.
    """
    E = np.asarray(E, dtype=complex)
    n = E.shape[0]
    k = drazin_index(E) if k is None else k
    k = max(k, 1)
    kc = pencil_degree(MatrixPair(E, np.eye(n))) if np.any(E) else 0
    if kc == 0:
        return np.zeros_like(E)
    mags = np.sort(np.abs(np.linalg.eigvals(E)))[::-1]
    eps0 = 1e-3 * float(mags[kc - 1]) ** (k + 1)
    Ek = np.linalg.matrix_power(E, k)
    Ek1 = Ek @ E
    table = [np.linalg.solve(Ek1 + (eps0 / 2**j) * np.eye(n), Ek) for j in range(levels)]
    # Neville-type elimination of eps, eps^2, ...
    for m in range(1, levels):
        f = 2.0**m
        table = [(f * table[j + 1] - table[j]) / (f - 1) for j in range(len(table) - 1)]
    return table[0]


def drazin_residuals(E, X, k: int | None = None) -> dict:
    """Relative residuals of ``EX = XE``, ``XEX = X`` and ``X E^{k+1} = E^k``.

    Each residual is divided by the natural scale of its terms
    (``||E|| ||X||``, ``||X||^2 ||E||`` and ``||X|| ||E||^{k+1}``).
    """
    E = np.asarray(E, dtype=complex)
    X = np.asarray(X, dtype=complex)
    k = max(drazin_index(E), 1) if k is None else k
    Ek = np.linalg.matrix_power(E, k)
    e = np.linalg.norm(E, 2) or 1.0
    x = np.linalg.norm(X, 2) or 1.0
    return {
        "commute": float(np.linalg.norm(E @ X - X @ E, 2) / (e * x)),
        "reflexive": float(np.linalg.norm(X @ E @ X - X, 2) / (x * x * e)),
        "power": float(np.linalg.norm(X @ Ek @ E - Ek, 2) / (x * e ** (k + 1))),
        "k": k,
    }


def commuting_reduction(p: MatrixPair, lam: complex | None = None) -> MatrixPair:
    """``(E, A) = ((lam M0 + M1)^{-1} M0, (lam M0 + M1)^{-1} M1)``, which commute.

    Raises
    ------
    InvalidArgument
        If the commutator check fails (should not happen for regular pairs).
    """
    lam = _choose_lambda(p) if lam is None else lam
    R = np.linalg.inv(p.pencil(lam))
    E, A = R @ p.M0, R @ p.M1
    sc = max(np.linalg.norm(E) * np.linalg.norm(A), 1e-300)
    if np.linalg.norm(E @ A - A @ E) > 1e-10 * max(sc, 1.0):
        raise InvalidArgument("reduced pair fails to commute")
    return MatrixPair(E, A)


@dataclass(frozen=True, eq=False)
class DAETrajectory:
    """Samples ``U(t_j)`` of a DAE solution."""

    t: np.ndarray
    U: np.ndarray
    method: str
    consistency_residual: float
    projected: bool = False
    extras: dict = field(default_factory=dict)

    def to_signal(self, grid: TimeGrid, nu: float = 0.0) -> WeightedSignal:
        if grid.n != self.t.size:
            raise ShapeMismatch("grid and trajectory sizes differ")
        return WeightedSignal(grid, nu, self.U)


def _times(t):
    if isinstance(t, TimeGrid):
        return t.times
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        raise InvalidArgument("pass an array of times or a TimeGrid")
    return t


def _propagate(G: np.ndarray, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``exp(-t G) x`` for each ``t >= 0`` (zero before ``0``)."""
    out = np.zeros((t.size, x.size), dtype=complex)
    if x.size == 0:
        return out
    for j, tj in enumerate(t):
        if tj >= 0:
            out[j] = sla.expm(-tj * G) @ x
    return out


def dae_solve(p: MatrixPair, U0, t, method: str = "general", inconsistent: str = "raise",
              atol: float = 1e-8) -> DAETrajectory:
    """Solve ``M0 U' + M1 U = 0``, ``U(0+) = U0`` at the times ``t``.

    Parameters
    ----------
    method : {'general', 'commuting'}
        ``general`` propagates ``exp(-t C)`` in Weierstrass coordinates;
        ``commuting`` uses ``exp(-t M0^D M1)`` (after
        :func:`commuting_reduction` if ``M0`` and ``M1`` do not commute).
    inconsistent : {'raise', 'project'}
        Policy when ``U0`` is farther than ``atol`` (relative) from the
        consistent subspace; ``project`` replaces it by its orthogonal
        projection and warns.

    Raises
    ------
    InconsistentInitialValue
        With the residual, when ``inconsistent='raise'``.
    """
    U0 = np.asarray(U0, dtype=complex).ravel()
    if U0.size != p.n:
        raise ShapeMismatch(f"U0 has {U0.size} entries, the pair has size {p.n}")
    t = _times(t)
    wd = weierstrass_form(p)
    B = consistent_subspace(p, check=False, wd=wd)
    proj = B @ (B.conj().T @ U0)
    nrm = np.linalg.norm(U0)
    res = float(np.linalg.norm(U0 - proj) / nrm) if nrm > 0 else 0.0
    projected = False
    if res > atol:
        if inconsistent == "raise":
            raise InconsistentInitialValue(
                f"U0 is not a consistent initial value (relative residual {res:.3g})", residual=res
            )
        if inconsistent != "project":
            raise InvalidArgument("inconsistent must be 'raise' or 'project'")
        warnings.warn(f"projecting U0 onto the consistent subspace (residual {res:.3g})", stacklevel=2)
        U0 = proj
        projected = True
    if method == "general":
        V0 = np.linalg.solve(wd.Q, U0)
        k = wd.k
        U = _propagate(wd.C, V0[:k], t) @ wd.Q[:, :k].T
    elif method == "commuting":
        q = p if p.commuting else commuting_reduction(p)
        G = drazin(q.M0) @ q.M1
        U = _propagate(G, U0, t)
    else:
        raise InvalidArgument(f"unknown method {method!r}")
    return DAETrajectory(t, U, method, res, projected)


def laplace_solution_check(p: MatrixPair, U0, traj: DAETrajectory, rho: float, n_freq: int = 16,
                           grid: TimeGrid | None = None) -> float:
    """Compare the transformed trajectory with ``((i w + rho) M0 + M1)^{-1} M0 U0 / sqrt(2 pi)``.

    The trajectory must be sampled on a uniform grid starting at ``t = 0``.
    The continuous transform is approximated by the discrete one with a
    trapezoid correction for the jump at ``t = 0``.  Returns the largest
    deviation (scaled by ``||U0||``) over the ``n_freq`` lowest frequencies.
    """
    U0 = np.asarray(U0, dtype=complex).ravel()
    t = traj.t
    if grid is None:
        dt = t[1] - t[0]
        grid = TimeGrid(float(t[0]), float(dt), t.size)
    if abs(grid.t0) > 1e-12:
        raise InvalidArgument("trajectory grid must start at t = 0")
    nrm = np.linalg.norm(U0)
    if nrm == 0:
        return float(np.max(np.abs(traj.U))) if traj.U.size else 0.0
    sig = WeightedSignal(grid, rho, traj.U)
    spec = forward(sig)
    cont = spec.continuous()
    corr = grid.dt / math.sqrt(2 * math.pi) * traj.U[0] * 0.5
    freqs = spec.freqs
    order = np.argsort(np.abs(freqs), kind="stable")[:n_freq]
    worst = 0.0
    for j in order:
        z = complex(spec.z[j])
        lhs = cont[j] - corr
        rhs = np.linalg.solve(p.pencil(z), p.M0 @ U0) / math.sqrt(2 * math.pi)
        worst = max(worst, float(np.linalg.norm(lhs - rhs)) / nrm)
    return worst
