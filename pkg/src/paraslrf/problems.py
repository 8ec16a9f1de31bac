"""Deterministic SPD test pencils with known spectra."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .linalg import DimensionError, NotPSDError, Pencil
from .mmio import read_matrix_market, write_matrix_market


@dataclass(frozen=True, eq=False)
class GeneratedPencil(Pencil):
    generator: str = ""
    shape: tuple = ()
    h: tuple = ()
    analytic: bool = False
    _eigs: np.ndarray = field(default=None, repr=False)

    def exact_eigenvalues(self, k=None):
        """Ascending closed-form generalized eigenvalues, the ``k`` smallest."""
        if self._eigs is None:
            raise ValueError(f"{self.generator} has no closed-form spectrum")
        return self._eigs if k is None else self._eigs[:k]


def _dirichlet_1d(m):
    return sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1], format="csr")


def fem1d_eigenvalues(n):
    h = 1.0 / (n + 1)
    k = np.arange(1, n + 1)
    c = np.cos(k * np.pi * h)
    return (6.0 / h**2) * (1.0 - c) / (2.0 + c)


def gen_fem1d(n):
    """Linear elements on (0, 1) with homogeneous Dirichlet ends."""
    if n < 2:
        raise ValueError("fem1d needs n >= 2")
    h = 1.0 / (n + 1)
    A = (1.0 / h) * _dirichlet_1d(n)
    B = (h / 6.0) * sp.diags([np.ones(n - 1), 4 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="csr")
    return GeneratedPencil(A, B, generator="fem1d", shape=(n,), h=(h,), analytic=True,
                           _eigs=fem1d_eigenvalues(n))


def laplace3d_eigenvalues(nx, ny, nz):
    parts = []
    for m in (nx, ny, nz):
        h = 1.0 / (m + 1)
        k = np.arange(1, m + 1)
        parts.append((2.0 - 2.0 * np.cos(k * np.pi * h)) / h**2)
    total = parts[0][:, None, None] + parts[1][None, :, None] + parts[2][None, None, :]
    return np.sort(total.ravel())


def gen_laplace3d(nx, ny, nz):
    """7-point Laplacian on the unit cube with lumped (diagonal) mass.

    Both matrices carry the cell volume hx*hy*hz, so the generalized
    eigenvalues are the sums of 1D discrete Dirichlet eigenvalues.
    """
    dims = (nx, ny, nz)
    if min(dims) < 2:
        raise ValueError("laplace3d needs every dimension >= 2")
    hs = tuple(1.0 / (m + 1) for m in dims)
    vol = hs[0] * hs[1] * hs[2]
    Ix, Iy, Iz = (sp.identity(m, format="csr") for m in dims)
    Tx, Ty, Tz = (_dirichlet_1d(m) / h**2 for m, h in zip(dims, hs))
    # x varies fastest.
    L = sp.kron(Iz, sp.kron(Iy, Tx)) + sp.kron(Iz, sp.kron(Ty, Ix)) + sp.kron(Tz, sp.kron(Iy, Ix))
    A = vol * sp.csr_matrix(L)
    B = vol * sp.identity(nx * ny * nz, format="csr")
    return GeneratedPencil(A, B, generator="laplace3d", shape=dims, h=hs, analytic=True,
                           _eigs=laplace3d_eigenvalues(*dims))


def load_pencil(path_a, path_b, sym_tol=1e-14, probes=16, seed=0):
    A = read_matrix_market(path_a)
    B = read_matrix_market(path_b)
    if A.shape != B.shape:
        raise DimensionError(f"A is {A.shape} but B is {B.shape}")
    diag = B.diagonal()
    if np.any(diag <= 0):
        raise NotPSDError("B has a non-positive diagonal entry")
    # Gershgorin prefilter: if every disc clears zero, B is positive definite.
    off = np.asarray(abs(B).sum(axis=1)).ravel() - np.abs(diag)
    pencil = Pencil(A, B)
    if np.all(diag - off > 0):
        probes = 0
    return pencil.check(sym_tol=sym_tol, probes=probes, seed=seed)


def dump_pencil(pencil, path_a, path_b):
    write_matrix_market(path_a, pencil.A, symmetric=True)
    write_matrix_market(path_b, pencil.B, symmetric=True)


def parse_problem(text):
    """Build a pencil from ``fem1d:n=..``, ``laplace3d:nx=..,ny=..,nz=..`` or
    ``files:A=..,B=..``."""
    name, _, args = text.partition(":")
    params = {}
    for item in filter(None, args.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise ValueError(f"malformed problem argument {item!r}")
        params[key.strip()] = value.strip()
    try:
        if name == "fem1d":
            return gen_fem1d(int(params["n"]))
        if name == "laplace3d":
            nx = int(params["nx"])
            return gen_laplace3d(nx, int(params.get("ny", nx)), int(params.get("nz", nx)))
        if name == "files":
            return load_pencil(params["A"], params["B"])
    except KeyError as exc:
        raise ValueError(f"problem {name!r} is missing parameter {exc}") from None
    raise ValueError(f"unknown problem {name!r}")
