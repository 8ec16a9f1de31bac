"""Preconditioned GCR for complex-shifted sparse systems."""

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .linalg import DimensionError, ShiftedMatrix

PRECONDITIONERS = ("jacobi", "ilu0", "none")

_PREC_CODES = {
    "none": _kernels.PREC_NONE,
    "jacobi": _kernels.PREC_JACOBI,
    "ilu0": _kernels.PREC_ILU0,
}


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-10
    max_iters: int = 10000
    restart: int = 30
    precond_kind: str = "ilu0"

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.restart < 1:
            raise ValueError("restart must be at least 1")
        if self.precond_kind not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {self.precond_kind!r}")


@dataclass(frozen=True, eq=False)
class Preconditioner:
    kind: str
    sigma: complex
    data: np.ndarray
    diag: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def code(self):
        return _PREC_CODES[self.kind]

    def apply(self, r):
        r = np.asarray(r, dtype=np.complex128)
        return _kernels.apply_prec(self.code, self.indptr, self.indices,
                                   self.data, self.diag, r)


@dataclass
class SolveStats:
    iterations: int
    rel_residual: float
    converged: bool
    wall_time: float
    breakdown: bool = False
    history: np.ndarray = field(default=None, repr=False)

    def as_dict(self):
        return {
            "iterations": self.iterations,
            "rel_residual": self.rel_residual,
            "converged": self.converged,
            "wall_time": self.wall_time,
            "breakdown": self.breakdown,
        }


def build_preconditioner(C: ShiftedMatrix, kind="ilu0"):
    if kind not in PRECONDITIONERS:
        raise ValueError(f"unknown preconditioner {kind!r}")
    if np.any(C.diag < 0):
        missing = int(np.flatnonzero(C.diag < 0)[0])
        raise ValueError(f"row {missing} has no diagonal entry")
    d = C.data[C.diag]
    floor = 1e-14 * np.abs(d).max()
    if kind == "none":
        data = np.zeros(0, dtype=np.complex128)
    elif kind == "jacobi":
        d = d.copy()
        mag = np.abs(d)
        for i in np.flatnonzero(mag < floor):
            d[i] = floor if mag[i] == 0 else d[i] * (floor / mag[i])
        data = 1.0 / d
    else:
        data = _kernels.ilu0_factor(C.indptr, C.indices, C.data, C.diag, floor)
    return Preconditioner(kind, C.sigma, data, C.diag, C.indptr, C.indices)


def gcr_solve(C: ShiftedMatrix, P: Preconditioner, f, x0=None, cfg=SolverConfig()):
    """Solve C x = f; the stopping test uses the true relative residual."""
    f = np.ascontiguousarray(f, dtype=np.complex128)
    if f.shape != (C.n,):
        raise DimensionError(f"rhs has shape {f.shape}, system is {C.n}")
    if x0 is None:
        x0 = np.zeros(C.n, dtype=np.complex128)
    else:
        x0 = np.ascontiguousarray(x0, dtype=np.complex128)
        if x0.shape != (C.n,):
            raise DimensionError(f"initial guess has shape {x0.shape}")
    t0 = time.perf_counter()
    if not np.any(f):
        return np.zeros(C.n, dtype=np.complex128), SolveStats(
            0, 0.0, True, time.perf_counter() - t0, history=np.zeros(1))
    x, its, hist, status, relres = _kernels.gcr(
        C.indptr, C.indices, C.data, P.code, P.data, P.diag, f, x0,
        cfg.rel_tol, cfg.max_iters, cfg.restart)
    stats = SolveStats(
        iterations=int(its),
        rel_residual=float(relres),
        converged=status == _kernels.GCR_CONVERGED,
        wall_time=time.perf_counter() - t0,
        breakdown=status == _kernels.GCR_BREAKDOWN,
        history=hist.copy(),
    )
    return x, stats


def solve_block(C, P, F, X0=None, cfg=SolverConfig(), executor=None):
    """Solve every column of F independently.

    Columns may be farmed out to ``executor``; each column's arithmetic is
    the same as a lone ``gcr_solve`` call, so the result does not depend on
    how the work is scheduled.
    """
    F = np.asarray(F)
    if F.ndim != 2 or F.shape[1] < 1:
        raise DimensionError("right-hand side block needs at least one column")
    k = F.shape[1]
    cols = [np.ascontiguousarray(F[:, i], dtype=np.complex128) for i in range(k)]
    guesses = [None] * k if X0 is None else [X0[:, i] for i in range(k)]

    def one(i):
        return gcr_solve(C, P, cols[i], guesses[i], cfg)

    if executor is None:
        results = [one(i) for i in range(k)]
    else:
        results = list(executor.map(one, range(k)))
    X = np.empty((C.n, k), dtype=np.complex128)
    stats = []
    for i, (x, st) in enumerate(results):
        X[:, i] = x
        stats.append(st)
    return X, stats


def cayley_initial_guess(theta, sigma, v):
    """Scaled Ritz vector v / (theta - sigma)."""
    return np.asarray(v, dtype=np.complex128) / (theta - sigma)
