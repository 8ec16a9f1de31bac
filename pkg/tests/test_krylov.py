from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
import scipy.sparse as sp

from oracles import dense_ilu0, random_sparse_spd
from paraslrf._kernels import csr_diag_pointers
from paraslrf.linalg import Pencil, ShiftedMatrix, form_shifted
from paraslrf.krylov import (
    SolverConfig, build_preconditioner, cayley_initial_guess, gcr_solve, solve_block,
)


def shifted(n, seed, sigma, density=0.05):
    A = random_sparse_spd(n, seed, density)
    B = random_sparse_spd(n, seed + 1000, density / 2)
    p = Pencil(A, B)
    return p, form_shifted(p, sigma)


def rhs(n, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def test_config_validation():
    for bad in (dict(rel_tol=0), dict(max_iters=0), dict(restart=0), dict(precond_kind="gamg")):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


@pytest.mark.parametrize("kind", ["jacobi", "ilu0"])
def test_diagonal_system_one_iteration(kind):
    d = np.linspace(1, 5, 20)
    p = Pencil(sp.diags(d, format="csr"), sp.identity(20, format="csr"))
    C = form_shifted(p, 0.5 + 1j)
    P = build_preconditioner(C, kind)
    f = rhs(20, 0)
    x, st = gcr_solve(C, P, f)
    assert st.iterations == 1 and st.converged
    assert np.allclose(x, f / (d - 0.5 - 1j), rtol=1e-14)


def test_ilu0_exact_on_triangular():
    rng = np.random.default_rng(1)
    T = np.tril(rng.standard_normal((15, 15)) * (rng.uniform(size=(15, 15)) < 0.3), -1)
    T = T + np.diag(rng.uniform(1, 2, 15))
    L = sp.csr_matrix(T.astype(complex))
    L.sort_indices()
    M = ShiftedMatrix(L.indptr.astype(np.int64), L.indices.astype(np.int64), L.data,
                      csr_diag_pointers(L.indptr, L.indices), 0.0)
    P = build_preconditioner(M, "ilu0")
    W = sp.csr_matrix((P.data, L.indices, L.indptr), shape=L.shape).toarray()
    Lf, Uf = np.tril(W, -1) + np.eye(15), np.triu(W)
    assert np.abs(Lf @ Uf - T).max() < 1e-14 * np.abs(T).max()
    f = rhs(15, 2)
    assert np.allclose(P.apply(f), np.linalg.solve(T, f), rtol=1e-13, atol=1e-13)


def test_ilu0_matches_dense_oracle():
    p, C = shifted(40, 3, 2.0 + 2.0j, density=0.1)
    Cd = C.tocsr().toarray()
    L, U = dense_ilu0(Cd)
    P = build_preconditioner(C, "ilu0")
    f = rhs(40, 4)
    ref = np.linalg.solve(U, np.linalg.solve(L, f))
    assert np.abs(P.apply(f) - ref).max() < 1e-12 * np.abs(ref).max()


def test_identity_one_iteration():
    I = sp.identity(30, format="csr")
    C = form_shifted(Pencil(2 * I, I), 1.0)
    x, st = gcr_solve(C, build_preconditioner(C, "none"), rhs(30, 5))
    assert st.iterations == 1
    assert np.allclose(x, rhs(30, 5))


def test_exact_initial_guess_zero_iterations():
    _, C = shifted(50, 6, 1.0 + 1.0j)
    P = build_preconditioner(C, "jacobi")
    xs = rhs(50, 7)
    f = C.matvec(xs)
    x, st = gcr_solve(C, P, f, x0=xs)
    assert st.iterations == 0 and st.converged


@pytest.mark.parametrize("kind", ["jacobi", "ilu0", "none"])
def test_gcr_vs_dense_solve(kind):
    _, C = shifted(120, 8, 3.0 + 3.0j)
    P = build_preconditioner(C, kind)
    f = rhs(120, 9)
    x, st = gcr_solve(C, P, f, cfg=SolverConfig(rel_tol=1e-12, max_iters=2000))
    assert st.converged
    ref = np.linalg.solve(C.tocsr().toarray(), f)
    assert np.linalg.norm(x - ref) < 1e-9 * np.linalg.norm(ref)
    true = np.linalg.norm(f - C.matvec(x)) / np.linalg.norm(f)
    assert abs(true - st.rel_residual) <= 1e-15 + 1e-12 * true


def test_maxiter_flags_nonconvergence():
    _, C = shifted(200, 10, 0.1 + 0.01j)
    x, st = gcr_solve(C, build_preconditioner(C, "none"), rhs(200, 11),
                      cfg=SolverConfig(rel_tol=1e-14, max_iters=3))
    assert not st.converged and st.iterations == 3
    assert st.rel_residual == pytest.approx(np.linalg.norm(rhs(200, 11) - C.matvec(x)) / np.linalg.norm(rhs(200, 11)))


def test_minimum_residual_within_cycle():
    _, C = shifted(300, 12, 1.0 + 0.5j)
    cfg = SolverConfig(rel_tol=1e-13, max_iters=120, restart=30)
    _, st = gcr_solve(C, build_preconditioner(C, "jacobi"), rhs(300, 13), cfg=cfg)
    h = st.history
    for k in range(len(h) - 1):
        if (k + 1) % cfg.restart:
            assert h[k + 1] <= h[k] * (1 + 1e-12)


def test_determinism():
    _, C = shifted(150, 14, 2.0 + 1.0j)
    P = build_preconditioner(C, "ilu0")
    a = gcr_solve(C, P, rhs(150, 15))
    b = gcr_solve(C, P, rhs(150, 15))
    assert a[1].iterations == b[1].iterations
    assert np.array_equal(a[0], b[0])


def test_solve_block_duplicate_columns_and_executor():
    _, C = shifted(100, 16, 1.5 + 1.5j)
    P = build_preconditioner(C, "ilu0")
    f = rhs(100, 17)
    F = np.column_stack([f, rhs(100, 18), f])
    X, stats = solve_block(C, P, F)
    assert np.array_equal(X[:, 0], X[:, 2])
    with ThreadPoolExecutor(3) as ex:
        Y, stats2 = solve_block(C, P, F, executor=ex)
    assert np.array_equal(X, Y)
    for i in range(3):
        x, st = gcr_solve(C, P, F[:, i])
        assert np.array_equal(x, X[:, i])
        assert st.iterations == stats[i].iterations == stats2[i].iterations


def test_cayley_guess_examples():
    v = np.arange(3.0)
    assert np.array_equal(cayley_initial_guess(2.0, 1.0, v), v)
    e1 = np.array([1.0, 0.0])
    assert np.allclose(cayley_initial_guess(0.0, 1j, e1), [1j, 0])


def _cayley_setup(kind, seed=20):
    n = 100
    rng = np.random.default_rng(seed)
    A = random_sparse_spd(n, seed, 0.05)
    B = random_sparse_spd(n, seed + 1, 0.03)
    p = Pencil(A, B)
    mu = rng.uniform(0.5, 2.0) * np.median(A.diagonal() / B.diagonal())
    sigma = mu * (1 + 1j)
    theta = rng.uniform(0.5, 1.5) * mu
    v = rng.standard_normal(n)
    C = form_shifted(p, sigma)
    P = build_preconditioner(C, kind)
    return p, C, P, sigma, theta, v


@pytest.mark.parametrize("kind", ["jacobi", "ilu0"])
def test_cayley_initial_residuals_parallel(kind):
    p, C, P, sigma, theta, v = _cayley_setup(kind)
    # Cayley system, zero guess.
    r_c = P.apply((p.A @ v - theta * (p.B @ v)).astype(complex))
    # Shift-invert system, scaled Ritz vector as guess.
    y0 = cayley_initial_guess(theta, sigma, v)
    r_s = P.apply((p.B @ v) - C.matvec(y0))
    ref = r_c / (sigma - theta)
    assert np.abs(r_s - ref).max() <= 1e-12 * np.abs(ref).max()


@pytest.mark.parametrize("kind", ["jacobi", "ilu0"])
def test_cayley_residual_sequences_coincide(kind):
    p, C, P, sigma, theta, v = _cayley_setup(kind)
    cfg = SolverConfig(rel_tol=1e-10, max_iters=500)
    _, st_c = gcr_solve(C, P, (p.A @ v - theta * (p.B @ v)).astype(complex), cfg=cfg)
    _, st_s = gcr_solve(C, P, (p.B @ v).astype(complex), cayley_initial_guess(theta, sigma, v), cfg)
    hc = st_c.history / st_c.history[0]
    hs = st_s.history / st_s.history[0]
    k = min(len(hc), len(hs))
    assert k > 3
    assert np.all(np.abs(hc[:k] - hs[:k]) <= 1e-10 * hc[:k])
