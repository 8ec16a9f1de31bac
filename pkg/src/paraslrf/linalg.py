"""Sparse and dense kernels, B-inner-product geometry and the projected
dense eigensolver."""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import _kernels

__all__ = [
    "DimensionError",
    "IllPosedFitError",
    "NotPSDError",
    "Pencil",
    "ShiftedMatrix",
    "spmv",
    "b_inner",
    "b_norms",
    "b_orthonormalize",
    "b_project_out",
    "jacobi_eigh",
    "solve_dense_gep",
    "dense_lsq",
    "form_shifted",
]


class DimensionError(ValueError):
    pass


class IllPosedFitError(np.linalg.LinAlgError):
    pass


class NotPSDError(np.linalg.LinAlgError):
    pass


def _canonical_csr(m):
    m = sp.csr_matrix(m)
    m.sum_duplicates()
    m.sort_indices()
    return m


def _symmetry_defect(m):
    d = m - m.T
    if d.nnz == 0:
        return 0.0
    scale = np.abs(m.data).max() if m.nnz else 1.0
    return np.abs(d.data).max() / scale


@dataclass(frozen=True, eq=False)
class Pencil:
    """Symmetric-definite pair (A, B) stored as canonical CSR."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    n: int = field(init=False)

    def __post_init__(self):
        A = _canonical_csr(self.A)
        B = _canonical_csr(self.B)
        if A.shape[0] != A.shape[1] or B.shape[0] != B.shape[1]:
            raise DimensionError("pencil matrices must be square")
        if A.shape != B.shape:
            raise DimensionError(f"A is {A.shape}, B is {B.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "n", A.shape[0])

    def check(self, sym_tol=1e-14, probes=8, seed=0):
        """Validate symmetry and (probabilistically) definiteness of B."""
        for name, m in (("A", self.A), ("B", self.B)):
            defect = _symmetry_defect(m)
            if defect > sym_tol:
                raise ValueError(f"{name} is not symmetric (defect {defect:.2e})")
        diag = self.B.diagonal()
        if np.any(diag <= 0):
            raise NotPSDError("B has a non-positive diagonal entry")
        rng = np.random.default_rng(seed)
        for _ in range(probes):
            x = rng.uniform(-1.0, 1.0, self.n)
            if x @ (self.B @ x) <= 0:
                raise NotPSDError("B failed a positive-definiteness probe")
        return self

    @property
    def union_pattern(self):
        """CSR pattern of A + B, computed once and shared by every shift."""
        try:
            return self._union
        except AttributeError:
            pass
        pat = _canonical_csr(abs(self.A) + abs(self.B))
        a_vals = _scatter_to_pattern(self.A, pat)
        b_vals = _scatter_to_pattern(self.B, pat)
        diag = _kernels.csr_diag_pointers(pat.indptr, pat.indices)
        union = (pat.indptr, pat.indices, a_vals, b_vals, diag)
        object.__setattr__(self, "_union", union)
        return union


def _scatter_to_pattern(m, pat):
    """Values of ``m`` laid out on the (superset) CSR pattern ``pat``."""
    n = np.int64(pat.shape[1])
    pat_rows = np.repeat(np.arange(pat.shape[0], dtype=np.int64), np.diff(pat.indptr))
    pat_keys = pat_rows * n + pat.indices
    coo = m.tocoo()
    keys = coo.row.astype(np.int64) * n + coo.col
    pos = np.searchsorted(pat_keys, keys)
    out = np.zeros(pat.nnz)
    np.add.at(out, pos, coo.data)
    return out


@dataclass(frozen=True, eq=False)
class ShiftedMatrix:
    """C = A - sigma*B on the union sparsity pattern of A and B."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    diag: np.ndarray
    sigma: complex

    @property
    def n(self):
        return self.indptr.shape[0] - 1

    @property
    def shape(self):
        return (self.n, self.n)

    def tocsr(self):
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def matvec(self, x):
        x = np.asarray(x, dtype=np.complex128)
        if x.shape != (self.n,):
            raise DimensionError(f"vector of length {x.shape} for n={self.n}")
        return _kernels.csr_matvec(self.indptr, self.indices, self.data, x)


def form_shifted(pencil, sigma):
    indptr, indices, a_vals, b_vals, diag = pencil.union_pattern
    sigma = complex(sigma)
    data = a_vals - sigma * b_vals
    return ShiftedMatrix(indptr, indices, data.astype(np.complex128), diag, sigma)


def spmv(M, x):
    """y = M x with a fixed row-major accumulation order."""
    if isinstance(M, ShiftedMatrix):
        return M.matvec(x)
    M = sp.csr_matrix(M)
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != M.shape[1]:
        raise DimensionError(f"matrix is {M.shape}, vector has shape {x.shape}")
    if not M.has_sorted_indices:
        M = _canonical_csr(M)
    return _kernels.csr_matvec(M.indptr, M.indices, M.data, x)


def b_inner(B, u, v):
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape or u.shape[0] != B.shape[0]:
        raise DimensionError("b_inner operands do not match B")
    return v @ (B @ u)


def b_norms(B, V):
    V = np.asarray(V)
    if V.ndim == 1:
        return float(np.sqrt(abs(V @ (B @ V))))
    return np.sqrt(np.abs(np.einsum("ij,ij->j", V, B @ V)))


def b_orthonormalize(B, V, drop_tol=1e-12):
    """Modified Gram-Schmidt in the B-inner product, two passes per column.

    Returns ``(Q, n_dropped)``. A column whose B-norm after projection falls
    below ``drop_tol`` times its B-norm before projection is discarded.
    """
    V = np.array(V, dtype=float, copy=True)
    if V.ndim == 1:
        V = V[:, None]
    if V.shape[0] != B.shape[0]:
        raise DimensionError("block rows do not match B")
    kept = []
    BQ = []
    dropped = 0
    for j in range(V.shape[1]):
        v = V[:, j].copy()
        before = b_norms(B, v)
        if before == 0.0:
            dropped += 1
            continue
        for _pass in range(2):
            for q, bq in zip(kept, BQ):
                v -= (bq @ v) * q
        bv = B @ v
        after = np.sqrt(abs(v @ bv))
        if after < drop_tol * before:
            dropped += 1
            continue
        kept.append(v / after)
        BQ.append(bv / after)
    if kept:
        Q = np.column_stack(kept)
    else:
        Q = np.zeros((V.shape[0], 0))
    return Q, dropped


def b_project_out(B, X, U):
    """U - X (X^T B U), applied twice. X must be B-orthonormal."""
    U = np.array(U, dtype=float, copy=True)
    X = np.asarray(X, dtype=float)
    if X.size == 0 or X.shape[1] == 0:
        return U
    if X.shape[0] != U.shape[0] or X.shape[0] != B.shape[0]:
        raise DimensionError("blocks do not match B")
    BX = B @ X
    for _pass in range(2):
        U -= X @ (BX.T @ U)
    return U


def jacobi_eigh(M, tol=1e-14):
    """Symmetric eigendecomposition by cyclic Jacobi, ascending order."""
    M = np.ascontiguousarray(M, dtype=float)
    if M.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 0))
    w, V = _kernels.jacobi_eigh(M, tol)
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def solve_dense_gep(Ahat, Bhat, drop_tol=1e-12):
    """Solve Ahat s = theta Bhat s for symmetric Ahat and PSD Bhat.

    Bhat is diagonalized first; modes below ``drop_tol`` times its largest
    eigenvalue are discarded and the problem is solved on the rest, so the
    returned S may have fewer columns than Ahat.
    """
    Ahat = np.asarray(Ahat, dtype=float)
    Bhat = np.asarray(Bhat, dtype=float)
    if Ahat.shape != Bhat.shape or Ahat.shape[0] != Ahat.shape[1]:
        raise DimensionError("projected matrices must be square and equal in size")
    k = Ahat.shape[0]
    if k == 0:
        return np.zeros(0), np.zeros((0, 0))
    mu, Q = jacobi_eigh(Bhat)
    top = mu[-1]
    if top <= 0:
        raise NotPSDError("projected mass not PSD")
    if mu[0] < -drop_tol * top:
        raise NotPSDError("projected mass not PSD")
    keep = mu >= drop_tol * top
    Qk = Q[:, keep] / np.sqrt(mu[keep])
    H = Qk.T @ Ahat @ Qk
    H = 0.5 * (H + H.T)
    theta, Y = jacobi_eigh(H)
    S = Qk @ Y
    return theta, S


def dense_lsq(M, b):
    """Least-squares solution of M w = b through a Householder QR."""
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float)
    m, k = M.shape
    if m < k:
        raise IllPosedFitError(f"{m} rows cannot determine {k} unknowns")
    if b.shape != (m,):
        raise DimensionError("right-hand side length does not match rows")
    Q, R = np.linalg.qr(M, mode="reduced")
    d = np.abs(np.diag(R))
    if d.min() < 1e-13 * d.max():
        raise IllPosedFitError("design matrix is rank deficient")
    return scipy.linalg.solve_triangular(R, Q.T @ b)
