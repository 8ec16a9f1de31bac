"""Matrix Market coordinate I/O for real sparse matrices."""

import scipy.io
import scipy.sparse as sp


class MatrixMarketError(ValueError):
    pass


_HEADER = "%%MatrixMarket"


def _check_header(path):
    with open(path, "r") as fh:
        first = fh.readline().split()
    if len(first) != 5 or first[0] != _HEADER or first[1].lower() != "matrix":
        raise MatrixMarketError(f"{path}: malformed Matrix Market header")
    fmt, field, symmetry = (t.lower() for t in first[2:])
    if fmt != "coordinate":
        raise MatrixMarketError(f"{path}: only coordinate format is supported, got {fmt!r}")
    if field not in ("real", "integer"):
        raise MatrixMarketError(f"{path}: field {field!r} is not real")
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketError(f"{path}: symmetry {symmetry!r} is not supported")


def read_matrix_market(path):
    """Read a real coordinate file into canonical CSR.

    Symmetric storage is mirrored, duplicate entries are summed.
    """
    _check_header(path)
    try:
        m = scipy.io.mmread(path)
    except (ValueError, IndexError) as exc:
        raise MatrixMarketError(f"{path}: {exc}") from exc
    m = sp.csr_matrix(m, dtype=float)
    m.sum_duplicates()
    m.sort_indices()
    return m


def write_matrix_market(path, m, symmetric=False):
    m = sp.coo_matrix(m, dtype=float)
    # Passing a file object keeps the path as given (no ".mtx" appended).
    with open(path, "wb") as fh:
        scipy.io.mmwrite(fh, m, symmetry="symmetric" if symmetric else "general")
