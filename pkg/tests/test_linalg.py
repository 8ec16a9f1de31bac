import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from oracles import normal_equations_lsq, random_spd, random_sparse_spd
from paraslrf.linalg import (
    DimensionError, IllPosedFitError, NotPSDError, Pencil, b_inner, b_norms,
    b_orthonormalize, b_project_out, dense_lsq, form_shifted, jacobi_eigh,
    solve_dense_gep, spmv,
)


def test_spmv_identity():
    x = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(spmv(sp.identity(3, format="csr"), x), x)


def test_spmv_tridiag_row_sums():
    T = sp.diags([-1, 2, -1], [-1, 0, 1], shape=(3, 3), format="csr")
    assert np.array_equal(spmv(T, np.ones(3)), [1.0, 0.0, 1.0])


def test_spmv_dimension_error():
    with pytest.raises(DimensionError):
        spmv(sp.identity(3, format="csr"), np.ones(4))


def test_spmv_matches_scipy_complex():
    A = random_sparse_spd(60, 1)
    rng = np.random.default_rng(2)
    x = rng.standard_normal(60) + 1j * rng.standard_normal(60)
    assert np.allclose(spmv(A, x), A @ x, rtol=0, atol=1e-12)


def test_b_inner_examples():
    assert b_inner(np.eye(2), np.array([3.0, 4.0]), np.array([3.0, 4.0])) == 25
    assert b_inner(np.diag([2.0, 3.0]), np.ones(2), np.ones(2)) == 5


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_symmetric_bilinear_form(seed):
    M = random_spd(12, seed)
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal(12), rng.standard_normal(12)
    bound = 1e-13 * np.linalg.norm(M) * np.linalg.norm(u) * np.linalg.norm(v)
    assert abs(b_inner(M, u, v) - b_inner(M, v, u)) <= bound


def test_b_orthonormalize_identity_unchanged():
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((10, 4)))
    V, dropped = b_orthonormalize(np.eye(10), Q)
    assert dropped == 0
    # Columns may flip sign only if the input already had that sign.
    assert np.abs(V - Q).max() < 1e-14


def test_b_orthonormalize_drops_dependent_column():
    e1 = np.zeros(5)
    e1[0] = 1
    V, dropped = b_orthonormalize(np.eye(5), np.column_stack([e1, e1]))
    assert dropped == 1
    assert V.shape == (5, 1)
    assert np.allclose(V[:, 0], e1)


def test_b_orthonormalize_random_spd():
    B = random_spd(20, 3)
    V = np.random.default_rng(4).standard_normal((20, 5))
    Q, _ = b_orthonormalize(B, V)
    assert np.abs(Q.T @ B @ Q - np.eye(5)).max() < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_orthonormalize_then_project_own_output(seed):
    B = random_sparse_spd(30, seed)
    V = np.random.default_rng(seed).standard_normal((30, 6))
    Q, _ = b_orthonormalize(B, V)
    R = b_project_out(B, Q, Q)
    assert b_norms(B, R).max() < 1e-10


def test_project_out_empty_and_in_span():
    B = random_spd(15, 5)
    U = np.random.default_rng(6).standard_normal((15, 3))
    assert np.array_equal(b_project_out(B, np.zeros((15, 0)), U), U)
    X, _ = b_orthonormalize(B, np.random.default_rng(7).standard_normal((15, 4)))
    W = X @ np.random.default_rng(8).standard_normal((4, 2))
    R = b_project_out(B, X, W)
    assert np.all(b_norms(B, R) < 1e-10 * b_norms(B, W))


def test_solve_dense_gep_examples():
    th, S = solve_dense_gep(np.diag([2.0, 5.0]), np.eye(2))
    assert np.allclose(th, [2, 5], atol=1e-15)
    assert np.allclose(np.abs(S), np.eye(2), atol=1e-15)
    th, _ = solve_dense_gep(np.array([[4.0]]), np.array([[2.0]]))
    assert np.allclose(th, [2.0])


def test_solve_dense_gep_identity_mass_matches_jacobi():
    A = random_spd(25, 9)
    th, _ = solve_dense_gep(A, np.eye(25))
    w, _ = jacobi_eigh(A)
    assert np.abs(th - w).max() < 1e-12 * np.abs(w).max()


def test_solve_dense_gep_vs_scipy():
    A, B = random_spd(30, 10), random_spd(30, 11)
    th, S = solve_dense_gep(A, B)
    ref = np.linalg.eigvalsh(np.linalg.solve(np.linalg.cholesky(B), np.linalg.solve(np.linalg.cholesky(B), A).T))
    assert np.allclose(th, np.sort(ref), rtol=1e-10)
    assert np.abs(S.T @ B @ S - np.eye(30)).max() < 1e-9


def test_solve_dense_gep_truncates_rank_deficient_mass():
    rng = np.random.default_rng(12)
    Y = rng.standard_normal((8, 3))
    Bhat = Y @ Y.T                      # rank 3
    Ahat = random_spd(8, 13)
    th, S = solve_dense_gep(Ahat, Bhat)
    assert len(th) == 3
    assert np.abs(S.T @ Bhat @ S - np.eye(3)).max() < 1e-8


def test_solve_dense_gep_rejects_indefinite_mass():
    with pytest.raises(NotPSDError):
        solve_dense_gep(np.eye(2), np.diag([1.0, -1.0]))


def test_jacobi_eigh_vs_numpy():
    A = random_spd(40, 14, cond=1e6)
    w, V = jacobi_eigh(A)
    assert np.abs(w - np.linalg.eigvalsh(A)).max() < 1e-12 * np.linalg.norm(A, 2)
    assert np.abs(V.T @ V - np.eye(40)).max() < 1e-12


def test_dense_lsq_examples():
    b = np.arange(4.0)
    assert np.allclose(dense_lsq(np.eye(4), b), b)
    rng = np.random.default_rng(15)
    M = rng.standard_normal((20, 5))
    w = rng.standard_normal(5)
    assert np.abs(dense_lsq(M, M @ w) - w).max() < 1e-12


def test_dense_lsq_vs_normal_equations():
    rng = np.random.default_rng(16)
    M, b = rng.standard_normal((40, 6)), rng.standard_normal(40)
    assert np.abs(dense_lsq(M, b) - normal_equations_lsq(M, b)).max() < 1e-9


def test_dense_lsq_rank_deficient():
    M = np.ones((6, 2))
    with pytest.raises(IllPosedFitError):
        dense_lsq(M, np.ones(6))


def test_form_shifted_examples():
    A = random_sparse_spd(20, 17)
    B = random_sparse_spd(20, 18)
    p = Pencil(A, B)
    C0 = form_shifted(p, 0.0)
    assert np.array_equal(C0.tocsr().toarray(), A.toarray())
    I = sp.identity(3, format="csr")
    C = form_shifted(Pencil(I, I), 1 + 1j)
    assert np.allclose(C.tocsr().toarray(), -1j * np.eye(3))


def test_form_shifted_conjugate():
    p = Pencil(random_sparse_spd(25, 19), random_sparse_spd(25, 20))
    s = 0.7 + 2.3j
    assert np.array_equal(form_shifted(p, np.conj(s)).data, np.conj(form_shifted(p, s).data))


def test_form_shifted_union_pattern_matches_dense():
    A = random_sparse_spd(30, 21)
    B = sp.csr_matrix(sp.diags(np.linspace(1, 2, 30)))
    p = Pencil(A, B)
    s = 1.5 + 0.5j
    assert np.abs(form_shifted(p, s).tocsr().toarray() - (A.toarray() - s * B.toarray())).max() < 1e-14


def test_pencil_check_rejects():
    A = sp.csr_matrix(np.array([[2.0, 1.0], [0.0, 2.0]]))
    with pytest.raises(ValueError):
        Pencil(A, sp.identity(2, format="csr")).check()
    with pytest.raises(NotPSDError):
        Pencil(sp.identity(2, format="csr"), sp.diags([1.0, -1.0], format="csr")).check()
    with pytest.raises(DimensionError):
        Pencil(sp.identity(2, format="csr"), sp.identity(3, format="csr"))
