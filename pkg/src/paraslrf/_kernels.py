"""Compiled CSR kernels.

Everything here runs with the GIL released so that worker threads in the
harness execute concurrently. Loops are written out explicitly: the
floating point order of every reduction is fixed, which is what makes the
block solves bitwise reproducible regardless of scheduling.
"""

import numpy as np
from numba import njit

PREC_NONE = 0
PREC_JACOBI = 1
PREC_ILU0 = 2

GCR_CONVERGED = 0
GCR_MAXITER = 1
GCR_BREAKDOWN = 2


@njit(cache=True, nogil=True)
def csr_matvec(indptr, indices, data, x):
    n = indptr.shape[0] - 1
    y = np.zeros(n, dtype=(data[:1] * x[:1]).dtype)
    for i in range(n):
        acc = y[i]
        for jj in range(indptr[i], indptr[i + 1]):
            acc += data[jj] * x[indices[jj]]
        y[i] = acc
    return y


@njit(cache=True, nogil=True)
def csr_diag_pointers(indptr, indices):
    """Position of the diagonal entry in each row, -1 where absent."""
    n = indptr.shape[0] - 1
    dp = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for jj in range(indptr[i], indptr[i + 1]):
            if indices[jj] == i:
                dp[i] = jj
                break
    return dp


@njit(cache=True, nogil=True)
def ilu0_factor(indptr, indices, data, diag, pivot_floor):
    """Zero-fill incomplete LU on the pattern of ``data`` (IKJ ordering).

    Column indices must be sorted within each row. The unit lower factor
    and the upper factor share the returned array. Pivots smaller than
    ``pivot_floor`` in modulus are lifted to that modulus, keeping phase.
    """
    n = indptr.shape[0] - 1
    fac = data.copy()
    marker = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        start = indptr[i]
        stop = indptr[i + 1]
        for jj in range(start, stop):
            marker[indices[jj]] = jj
        for kk in range(start, stop):
            k = indices[kk]
            if k >= i:
                break
            lik = fac[kk] / fac[diag[k]]
            fac[kk] = lik
            for jj in range(diag[k] + 1, indptr[k + 1]):
                pos = marker[indices[jj]]
                if pos >= 0:
                    fac[pos] -= lik * fac[jj]
        piv = fac[diag[i]]
        mag = abs(piv)
        if mag < pivot_floor:
            if mag == 0.0:
                fac[diag[i]] = pivot_floor
            else:
                fac[diag[i]] = piv * (pivot_floor / mag)
        for jj in range(start, stop):
            marker[indices[jj]] = -1
    return fac


@njit(cache=True, nogil=True)
def ilu0_solve(indptr, indices, fac, diag, r):
    n = indptr.shape[0] - 1
    z = r.astype(fac.dtype)
    for i in range(n):
        acc = z[i]
        for jj in range(indptr[i], diag[i]):
            acc -= fac[jj] * z[indices[jj]]
        z[i] = acc
    for i in range(n - 1, -1, -1):
        acc = z[i]
        for jj in range(diag[i] + 1, indptr[i + 1]):
            acc -= fac[jj] * z[indices[jj]]
        z[i] = acc / fac[diag[i]]
    return z


@njit(cache=True, nogil=True)
def apply_prec(kind, indptr, indices, pdata, pdiag, r):
    if kind == PREC_JACOBI:
        z = np.empty(r.shape[0], dtype=pdata.dtype)
        for i in range(r.shape[0]):
            z[i] = pdata[i] * r[i]
        return z
    if kind == PREC_ILU0:
        return ilu0_solve(indptr, indices, pdata, pdiag, r)
    return r.copy()


@njit(cache=True, nogil=True)
def _norm2(v):
    acc = 0.0
    for i in range(v.shape[0]):
        acc += v[i].real * v[i].real + v[i].imag * v[i].imag
    return np.sqrt(acc)


@njit(cache=True, nogil=True)
def _vdot(a, b):
    acc = 0.0 + 0.0j
    for i in range(a.shape[0]):
        acc += np.conj(a[i]) * b[i]
    return acc


@njit(cache=True, nogil=True)
def _true_residual(indptr, indices, cdata, f, x):
    cx = csr_matvec(indptr, indices, cdata, x)
    r = np.empty_like(f)
    for i in range(f.shape[0]):
        r[i] = f[i] - cx[i]
    return r


@njit(cache=True, nogil=True)
def gcr(indptr, indices, cdata, pkind, pdata, pdiag, f, x0, tol, maxiter,
        restart):
    """Restarted right-preconditioned GCR.

    Returns ``(x, iterations, history, status, true_relres)`` where
    ``history[k]`` is the residual 2-norm after ``k`` iterations (entry 0
    is the true initial residual).
    """
    n = f.shape[0]
    x = x0.copy()
    fnorm = _norm2(f)
    hist = np.empty(maxiter + 1, dtype=np.float64)
    r = _true_residual(indptr, indices, cdata, f, x)
    rnorm = _norm2(r)
    hist[0] = rnorm
    target = tol * fnorm
    if rnorm < target:
        return x, 0, hist[:1], GCR_CONVERGED, rnorm / fnorm

    zs = np.empty((restart, n), dtype=np.complex128)
    qs = np.empty((restart, n), dtype=np.complex128)
    it = 0
    status = GCR_MAXITER
    while it < maxiter:
        m = 0
        restart_cycle = False
        while m < restart and it < maxiter:
            z = apply_prec(pkind, indptr, indices, pdata, pdiag, r)
            q = csr_matvec(indptr, indices, cdata, z)
            for i in range(m):
                alpha = _vdot(qs[i], q)
                for t in range(n):
                    q[t] -= alpha * qs[i, t]
                    z[t] -= alpha * zs[i, t]
            beta = _norm2(q)
            if beta < 1e-300:
                status = GCR_BREAKDOWN
                r = _true_residual(indptr, indices, cdata, f, x)
                return x, it, hist[:it + 1], status, _norm2(r) / fnorm
            inv = 1.0 / beta
            for t in range(n):
                q[t] *= inv
                z[t] *= inv
            a = _vdot(q, r)
            for t in range(n):
                x[t] += a * z[t]
                r[t] -= a * q[t]
            qs[m] = q
            zs[m] = z
            m += 1
            it += 1
            rnorm = _norm2(r)
            hist[it] = rnorm
            if rnorm < target:
                r = _true_residual(indptr, indices, cdata, f, x)
                rtrue = _norm2(r)
                if rtrue < target:
                    return x, it, hist[:it + 1], GCR_CONVERGED, rtrue / fnorm
                restart_cycle = True
                break
        if not restart_cycle:
            r = _true_residual(indptr, indices, cdata, f, x)
    rtrue = _norm2(_true_residual(indptr, indices, cdata, f, x))
    if rtrue < target:
        status = GCR_CONVERGED
    return x, it, hist[:it + 1], status, rtrue / fnorm


@njit(cache=True)
def jacobi_eigh(a, tol):
    """Cyclic Jacobi for a dense symmetric matrix.

    Sweeps until every off-diagonal magnitude is below ``tol`` times the
    Frobenius norm of the input. Returns unsorted ``(eigenvalues, V)``.
    """
    n = a.shape[0]
    m = a.copy()
    v = np.eye(n)
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += m[i, j] * m[i, j]
    fro = np.sqrt(fro)
    thresh = tol * fro
    for _sweep in range(100):
        offmax = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                if abs(m[p, q]) > offmax:
                    offmax = abs(m[p, q])
        if offmax <= thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = m[p, q]
                if apq == 0.0:
                    continue
                tau = (m[q, q] - m[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    mkp = m[k, p]
                    mkq = m[k, q]
                    m[k, p] = c * mkp - s * mkq
                    m[k, q] = s * mkp + c * mkq
                for k in range(n):
                    mpk = m[p, k]
                    mqk = m[q, k]
                    m[p, k] = c * mpk - s * mqk
                    m[q, k] = s * mpk + c * mqk
                m[p, q] = 0.0
                m[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    w = np.empty(n)
    for i in range(n):
        w[i] = m[i, i]
    return w, v
