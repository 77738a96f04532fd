"""Matrix pairs: spectra, normal forms, Wong sequences, Drazin inverses and flows."""

import json

import numpy as np
import pytest
import scipy.linalg as sla
from numpy.testing import assert_allclose

from evoeq.dae import (
    MatrixPair,
    commuting_reduction,
    consistent_subspace,
    dae_solve,
    drazin,
    drazin_index,
    drazin_limit,
    drazin_residuals,
    example_pair,
    index_report,
    is_regular,
    laplace_solution_check,
    load_pair,
    pair_index,
    pair_spectrum,
    pencil_degree,
    rlc_pair,
    rlc_reference,
    subspace_distance,
    weierstrass_form,
    wong_range,
    wong_sequence,
)
from evoeq.errors import InconsistentInitialValue, InvalidArgument, NotRegular, ShapeMismatch
from evoeq.signal import make_grid


def _well_conditioned(rng, n):
    Qm, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    return Qm @ np.diag(rng.uniform(1.0, 2.0, n))


def _nilpotent(rng, size, ell):
    """Strictly upper triangular block with nilpotency degree ``ell``."""
    N = np.zeros((size, size), dtype=complex)
    start = 0
    blocks = [ell] + [1] * (size - ell)
    for b in blocks:
        for i in range(b - 1):
            N[start + i, start + i + 1] = rng.uniform(0.5, 1.5)
        start += b
    return N


def random_pair(rng, n, k, ell=1):
    """Regular pair ``P^{-1} diag(I, N) Q^{-1}``, ``P^{-1} diag(C, I) Q^{-1}`` with Re spec(C) > 0."""
    ell = min(ell, n - k) if n > k else 0
    G = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
    C = G + ((np.linalg.norm(G, 2) if k else 0.0) + 0.5) * np.eye(k)
    N = _nilpotent(rng, n - k, max(ell, 1)) if n > k else np.zeros((0, 0))
    Pi, Qi = _well_conditioned(rng, n), _well_conditioned(rng, n)
    M0 = Pi @ sla.block_diag(np.eye(k), N) @ Qi
    M1 = Pi @ sla.block_diag(C, np.eye(n - k)) @ Qi
    return MatrixPair(M0, M1), C, Qi


CASES = [(n, k, ell) for n in range(1, 7) for k in range(0, n + 1) for ell in (1, 2) if not (ell == 2 and n - k < 2)]


# ---------------------------------------------------------------- types / IO


def test_pair_validation():
    with pytest.raises(ShapeMismatch):
        MatrixPair(np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ShapeMismatch):
        MatrixPair(np.eye(2), np.eye(3))
    with pytest.raises(InvalidArgument):
        MatrixPair(np.array([[np.nan]]), np.eye(1))
    p = example_pair()
    assert p.n == 2
    assert not p.M0.flags.writeable


def test_load_pair_json_and_csv(tmp_path):
    jp = tmp_path / "p.json"
    jp.write_text(json.dumps({"M0": [[1, 1], [0, 0]], "M1": [[1, 0], [0, [1, 0]]]}))
    cp = tmp_path / "p.csv"
    cp.write_text("# M0 then M1\n1,1\n0,0\n1,0\n0,1+0j\n")
    ref = example_pair()
    for path in (jp, cp):
        p = load_pair(path)
        assert_allclose(p.M0, ref.M0)
        assert_allclose(p.M1, ref.M1)


@pytest.mark.parametrize(
    "name, text",
    [("bad.json", "{"), ("keys.json", '{"M0": [[1]]}'), ("shape.json", '{"M0": [[1]], "M1": [[1, 0]]}'),
     ("rows.csv", "1,0\n0,1\n1,0\n"), ("entry.csv", "a\nb\n")],
)
def test_load_pair_rejects(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    with pytest.raises(InvalidArgument):
        load_pair(path)


def test_load_pair_missing_file(tmp_path):
    with pytest.raises(InvalidArgument):
        load_pair(tmp_path / "absent.json")


# ------------------------------------------------------------------ spectrum


def test_spectrum_example():
    s = pair_spectrum(example_pair())
    assert not s.whole_plane
    assert s.degree == 1
    assert_allclose(s.values, [-1.0], atol=1e-12)


def test_spectrum_of_ode_pair(rng):
    A = rng.standard_normal((5, 5))
    s = pair_spectrum(MatrixPair(np.eye(5), -A))
    ev = np.linalg.eigvals(A)
    assert s.values.size == 5
    for v in ev:
        assert np.min(np.abs(s.values - v)) < 1e-10


def test_spectrum_whole_plane():
    M1 = np.array([[1.0, 0.0], [0.0, 0.0]])
    s = pair_spectrum(MatrixPair(np.zeros((2, 2)), M1))
    assert s.whole_plane
    assert s.values.size == 0
    assert not is_regular(MatrixPair(np.zeros((2, 2)), M1))


def test_spectrum_purely_algebraic():
    s = pair_spectrum(MatrixPair(np.zeros((3, 3)), np.eye(3)))
    assert not s.whole_plane
    assert s.degree == 0
    assert s.values.size == 0


@pytest.mark.parametrize("n,k,ell", CASES[::3])
def test_spectrum_random_matches_C(rng, n, k, ell):
    p, C, _ = random_pair(rng, n, k, ell)
    s = pair_spectrum(p)
    # det(z M0 + M1) vanishes where z I + C is singular
    ev = -np.linalg.eigvals(C) if k else np.zeros(0)
    assert s.values.size == k
    for v in ev:
        assert np.min(np.abs(s.values - v)) < 1e-8 * max(1.0, abs(v))


# ---------------------------------------------------------------- Weierstrass


def test_weierstrass_example():
    wd = weierstrass_form(example_pair())
    assert wd.k == 1
    assert wd.N.shape == (1, 1)
    assert_allclose(wd.N, 0.0, atol=1e-12)
    assert_allclose(wd.C, [[1.0]], atol=1e-12)
    assert max(wd.residuals.values()) < 1e-9
    assert wd.index == 1


def test_weierstrass_ode_pair(rng):
    M1 = rng.standard_normal((4, 4))
    wd = weierstrass_form(MatrixPair(np.eye(4), M1))
    assert wd.k == 4
    assert wd.N.shape == (0, 0)
    # C is similar to M1
    assert_allclose(np.sort_complex(np.linalg.eigvals(wd.C)), np.sort_complex(np.linalg.eigvals(M1)), atol=1e-9)


@pytest.mark.parametrize("n,k,ell", CASES)
def test_weierstrass_random(rng, n, k, ell):
    p, C, _ = random_pair(rng, n, k, ell)
    wd = weierstrass_form(p)
    assert wd.k == k
    assert max(wd.residuals.values()) < 1e-9
    P, Q = wd.P, wd.Q
    assert_allclose(P @ p.M0 @ Q, sla.block_diag(np.eye(k), wd.N), atol=1e-9)
    assert_allclose(P @ p.M1 @ Q, sla.block_diag(wd.C, np.eye(n - k)), atol=1e-9)
    if n > k:
        assert np.linalg.norm(np.linalg.matrix_power(wd.N, n - k)) < 1e-9


def test_weierstrass_irregular():
    with pytest.raises(NotRegular):
        weierstrass_form(MatrixPair(np.zeros((2, 2)), np.diag([1.0, 0.0])))


@pytest.mark.parametrize("n,k,ell", [c for c in CASES if c[0] <= 6] + [(7, 3, 2), (8, 5, 1), (8, 2, 3)])
def test_degree_equals_k(rng, n, k, ell):
    p, _, _ = random_pair(rng, n, k, ell)
    assert pencil_degree(p) == k
    assert weierstrass_form(p).k == k


# --------------------------------------------------------------------- index


def test_index_examples():
    assert pair_index(MatrixPair(np.eye(3), np.diag([1.0, 2.0, 3.0]))) == 1
    assert pair_index(example_pair()) == 1
    J3 = np.diag([1.0, 1.0], 1)
    assert pair_index(MatrixPair(J3, np.eye(3))) == 3


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_index_random(rng, ell):
    p, _, _ = random_pair(rng, 6, 2, ell)
    rep = index_report(p)
    assert rep.index == ell
    assert rep.growth_index == ell
    assert pair_index(p) == ell


def test_index_report_radii_grow():
    rep = index_report(MatrixPair(np.diag([1.0, 1.0], 1), np.eye(3)))
    assert len(rep.radii) == 4
    assert all(b > a for a, b in zip(rep.radii, rep.radii[1:]))
    assert rep.slope == pytest.approx(2.0, abs=0.05)


# ---------------------------------------------------------------------- Wong


def test_wong_example():
    w = wong_sequence(example_pair())
    assert w.stabilization == 1
    assert w.dims[:2] == (2, 1)
    assert subspace_distance(w.limit, np.array([[1.0], [0.0]])) < 1e-12


def test_wong_ode_pair(rng):
    w = wong_sequence(MatrixPair(np.eye(4), rng.standard_normal((4, 4))))
    assert w.stabilization == 0
    assert all(d == 4 for d in w.dims)


def test_wong_algebraic_pair():
    w = wong_sequence(MatrixPair(np.zeros((3, 3)), np.eye(3)))
    assert w.limit.shape[1] == 0


@pytest.mark.parametrize("n,k,ell", [(4, 2, 2), (5, 1, 3), (6, 3, 1), (6, 2, 2), (3, 3, 1)])
def test_wong_stabilizes_at_index(rng, n, k, ell):
    p, _, _ = random_pair(rng, n, k, ell)
    w = wong_sequence(p)
    dims = w.dims
    assert all(b <= a for a, b in zip(dims, dims[1:]))
    assert dims[-1] == k
    assert w.stabilization == (pair_index(p) if n > k else 0)
    # nesting: each basis lies in the previous one
    for A, B in zip(w.bases, w.bases[1:]):
        if B.shape[1]:
            assert np.linalg.norm(B - A @ (A.conj().T @ B)) < 1e-9
    # range formula cross-check
    for j, B in enumerate(w.bases):
        R = wong_range(p, j)
        assert R.shape[1] == B.shape[1]
        if B.shape[1]:
            assert subspace_distance(R, B) < 1e-8


# ---------------------------------------------------------------- consistent


def test_consistent_examples():
    B = consistent_subspace(example_pair())
    assert subspace_distance(B, np.array([[1.0], [0.0]])) < 1e-12
    assert consistent_subspace(MatrixPair(np.eye(3), np.eye(3))).shape[1] == 3
    assert consistent_subspace(MatrixPair(np.zeros((3, 3)), np.eye(3))).shape[1] == 0


@pytest.mark.parametrize("n,k,ell", [(4, 2, 2), (6, 3, 1), (8, 4, 3)])
def test_m0_injective_on_consistent_space(rng, n, k, ell):
    p, _, _ = random_pair(rng, n, k, ell)
    B = consistent_subspace(p)
    assert B.shape[1] == k
    assert np.linalg.svd(p.M0 @ B, compute_uv=False).min() > 1e-6


# -------------------------------------------------------------------- Drazin


def test_drazin_examples(rng):
    E = rng.standard_normal((4, 4)) + 4 * np.eye(4)
    assert_allclose(drazin(E), np.linalg.inv(E), atol=1e-10)
    assert_allclose(drazin(np.diag([1.0, 1.0], 1)), 0.0, atol=1e-14)
    assert_allclose(drazin(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]), atol=1e-12)
    assert drazin_index(np.diag([2.0, 0.0])) == 1
    assert drazin_index(np.eye(2)) == 0
    assert drazin_index(np.diag([1.0, 1.0], 1)) == 3


def random_singular(rng, n, kc, ell):
    core = rng.standard_normal((kc, kc)) + 1j * rng.standard_normal((kc, kc))
    core = core + (np.linalg.norm(core, 2) + 0.5) * np.eye(kc)
    N = _nilpotent(rng, n - kc, ell) if n > kc else np.zeros((0, 0))
    V = _well_conditioned(rng, n)
    return V @ sla.block_diag(core, N) @ np.linalg.inv(V), ell if n > kc else 0


def test_drazin_random_identities_and_limit(rng):
    for _ in range(50):
        n = int(rng.integers(1, 7))
        kc = int(rng.integers(1, n + 1))
        ell = int(rng.integers(1, n - kc + 1)) if n > kc else 1
        E, ind = random_singular(rng, n, kc, ell)
        X = drazin(E)
        res = drazin_residuals(E, X)
        assert max(res["commute"], res["reflexive"], res["power"]) < 1e-10
        assert drazin_index(E) == ind
        assert np.linalg.norm(drazin_limit(E) - X) <= 1e-8 * max(1.0, np.linalg.norm(X))


# ---------------------------------------------------------------- trajectories


def test_solve_example():
    t = np.linspace(0.0, 5.0, 101)
    traj = dae_solve(example_pair(), [2.0, 0.0], t)
    ref = np.stack([2.0 * np.exp(-t), 0 * t], axis=1)
    assert_allclose(traj.U, ref, atol=1e-8)
    assert traj.consistency_residual == 0.0
    alt = dae_solve(example_pair(), [2.0, 0.0], t, method="commuting")
    assert_allclose(alt.U, ref, atol=1e-8)


def test_solve_rlc():
    t = np.linspace(0.0, 8.0, 1601)
    p = rlc_pair()
    B = consistent_subspace(p)
    assert B.shape[1] == 2
    ref = rlc_reference(t, 0.5, 1.0)
    traj = dae_solve(p, ref[0], t)
    assert_allclose(traj.U, ref, atol=1e-8)
    # the trajectory satisfies the circuit equations
    Ud = np.gradient(traj.U, t, axis=0, edge_order=2)
    resid = Ud @ p.M0.T + traj.U @ p.M1.T
    assert np.max(np.abs(resid[2:-2])) < 1e-4


def test_solve_zero():
    traj = dae_solve(rlc_pair(), np.zeros(4), np.linspace(0, 1, 11))
    assert np.all(traj.U == 0)


def test_solve_inconsistent():
    with pytest.raises(InconsistentInitialValue) as exc:
        dae_solve(example_pair(), [0.0, 1.0], np.linspace(0, 1, 5))
    assert exc.value.residual == pytest.approx(1.0)
    with pytest.warns(UserWarning):
        traj = dae_solve(example_pair(), [1.0, 1.0], np.linspace(0, 1, 5), inconsistent="project")
    assert traj.projected
    assert_allclose(traj.U[:, 1], 0.0, atol=1e-14)


def test_solve_arguments():
    with pytest.raises(ShapeMismatch):
        dae_solve(example_pair(), [1.0], [0.0, 1.0])
    with pytest.raises(InvalidArgument):
        dae_solve(example_pair(), [1.0, 0.0], [0.0, 1.0], method="euler")
    with pytest.raises(InvalidArgument):
        dae_solve(example_pair(), [1.0, 0.0], 1.0)


@pytest.mark.parametrize("seed", range(5))
def test_commuting_and_general_paths_agree(seed):
    rng = np.random.default_rng(seed)
    p, _, _ = random_pair(rng, 4, 2, 2)
    q = commuting_reduction(p)
    assert q.commuting
    B = consistent_subspace(q)
    U0 = B @ (rng.standard_normal(B.shape[1]) + 1j * rng.standard_normal(B.shape[1]))
    t = np.linspace(0.0, 3.0, 31)
    a = dae_solve(q, U0, t, method="general")
    b = dae_solve(q, U0, t, method="commuting")
    assert np.max(np.abs(a.U - b.U)) < 1e-9


def test_commuting_reduction_properties(rng):
    p = example_pair()
    q = commuting_reduction(p)
    assert np.linalg.norm(q.M0 @ q.M1 - q.M1 @ q.M0) < 1e-10
    assert subspace_distance(consistent_subspace(q), consistent_subspace(p)) < 1e-10
    t = np.linspace(0, 2, 21)
    assert_allclose(dae_solve(q, [1.0, 0.0], t).U, dae_solve(p, [1.0, 0.0], t).U, atol=1e-10)
    M1 = rng.standard_normal((3, 3))
    r = commuting_reduction(MatrixPair(np.eye(3), M1))
    assert np.linalg.norm(r.M0 @ r.M1 - r.M1 @ r.M0) < 1e-10


# -------------------------------------------------------------------- Laplace


def test_laplace_example():
    # the jump at t = 0 leaves an O(dt^2) quadrature error
    grid = make_grid(0.0, 1.0 / 512, 16384)
    p = example_pair()
    traj = dae_solve(p, [1.0, 0.0], grid)
    assert laplace_solution_check(p, [1.0, 0.0], traj, rho=1.0) < 1e-6
    zero = dae_solve(p, [0.0, 0.0], grid)
    assert laplace_solution_check(p, [0.0, 0.0], zero, rho=1.0) == 0.0


@pytest.mark.parametrize("seed", range(4))
def test_laplace_random_commuting(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(2, 5))
    p, _, _ = random_pair(rng, n, int(rng.integers(1, n + 1)), 1)
    q = commuting_reduction(p)
    B = consistent_subspace(q)
    U0 = B @ rng.standard_normal(B.shape[1])
    grid = make_grid(0.0, 1.0 / 512, 16384)
    traj = dae_solve(q, U0, grid, method="commuting")
    assert laplace_solution_check(q, U0, traj, rho=1.0) < 1e-5


def test_laplace_needs_origin():
    grid = make_grid(1.0, 0.01, 64)
    traj = dae_solve(example_pair(), [1.0, 0.0], grid)
    with pytest.raises(InvalidArgument):
        laplace_solution_check(example_pair(), [1.0, 0.0], traj, rho=1.0)
