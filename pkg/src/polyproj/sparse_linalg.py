"""Sparse matrix storage and the numerical kernels shared by every solver.

The module owns the compressed-sparse-column matrix type used for
constraint matrices and their submatrices, plus the handful of dense and
sparse kernels the Newton and path-following solvers are built from:
weighted normal-matrix assembly, shifted Cholesky factorization,
Jacobi-preconditioned conjugate gradients, rank-revealing selection of
independent columns, null-space bases, and minimum-norm least-squares
solves.  Matrix Market coordinate I/O lives here as well because it is
the on-disk form of :class:`SparseMatrix`.

Everything is immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SparseMatrix",
    "CholFactor",
    "InvalidSupportError",
    "NotPositiveDefiniteError",
    "as_vector",
    "assemble_normal_matrix",
    "cholesky_shifted",
    "conjugate_gradient",
    "independent_columns",
    "nullspace_basis",
    "least_squares_solve",
    "read_matrix_market",
    "write_matrix_market",
]

# Systems at or below this dimension are factored densely; above it the
# SuperLU sparse path with a fill-reducing ordering is used.
DENSE_FACTOR_MAX_DIM = 256


class InvalidSupportError(ValueError):
    """A column index set refers outside the matrix."""


class NotPositiveDefiniteError(ValueError):
    """A matrix handed to the Cholesky kernel is not positive definite.

    For shifted normal matrices this signals a bug in Jacobian assembly,
    not a property of the problem data.
    """


def as_vector(values, length: int | None = None, name: str = "vector") -> np.ndarray:
    """Validate and return a finite 1-D float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {length}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


class SparseMatrix:
    """Immutable compressed-sparse-column matrix.

    Invariants enforced at construction: row indices strictly increasing
    within each column, no explicitly stored zeros, all values finite.
    """

    __slots__ = ("_csc",)

    def __init__(self, matrix):
        if isinstance(matrix, SparseMatrix):
            self._csc = matrix._csc
            return
        if isinstance(matrix, np.ndarray):
            csc = sp.csc_array(matrix)
        elif sp.issparse(matrix):
            csc = sp.csc_array(matrix)
        else:
            raise TypeError("SparseMatrix expects a numpy array or scipy sparse matrix")
        csc = csc.astype(np.float64, copy=False)
        csc.sum_duplicates()
        csc.eliminate_zeros()
        csc.sort_indices()
        if csc.nnz and not np.all(np.isfinite(csc.data)):
            raise ValueError("matrix contains non-finite entries")
        self._csc = csc

    @classmethod
    def from_coo(cls, nrows: int, ncols: int, rows, cols, values) -> "SparseMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if rows.size and (rows.min() < 0 or rows.max() >= nrows):
            raise ValueError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= ncols):
            raise ValueError("column index out of range")
        return cls(sp.coo_array((values, (rows, cols)), shape=(nrows, ncols)))

    @classmethod
    def from_dense(cls, arr) -> "SparseMatrix":
        return cls(np.asarray(arr, dtype=np.float64))

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(sp.eye_array(n, format="csc"))

    @property
    def csc(self) -> sp.csc_array:
        """The underlying scipy CSC array (treat as read-only)."""
        return self._csc

    @property
    def shape(self) -> tuple[int, int]:
        return self._csc.shape

    @property
    def nrows(self) -> int:
        return self._csc.shape[0]

    @property
    def ncols(self) -> int:
        return self._csc.shape[1]

    @property
    def nnz(self) -> int:
        return self._csc.nnz

    def toarray(self) -> np.ndarray:
        return self._csc.toarray()

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix(self._csc.T.tocsc())

    def matvec(self, x) -> np.ndarray:
        return self._csc @ np.asarray(x, dtype=np.float64)

    def rmatvec(self, y) -> np.ndarray:
        return self._csc.T @ np.asarray(y, dtype=np.float64)

    def cols(self, idx) -> "SparseMatrix":
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.ncols):
            raise InvalidSupportError("column index out of range")
        return SparseMatrix(self._csc[:, idx])

    def column_norms(self) -> np.ndarray:
        sq = self._csc.multiply(self._csc).sum(axis=0)
        return np.sqrt(np.asarray(sq, dtype=np.float64).ravel())

    def diagonal(self) -> np.ndarray:
        return np.asarray(self._csc.diagonal(), dtype=np.float64)

    def scaled(self, factor: float) -> "SparseMatrix":
        return SparseMatrix(self._csc * float(factor))

    def has_zero_column(self) -> bool:
        counts = np.diff(self._csc.indptr)
        return bool(np.any(counts == 0))

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"SparseMatrix({self.nrows}x{self.ncols}, nnz={self.nnz})"


class CholFactor:
    """Cholesky-type factorization of ``M + shift*I``.

    ``solve`` applies the inverse.  ``perm`` is the fill-reducing column
    permutation and ``L`` the lower-triangular factor (dense array on
    the dense path, :class:`SparseMatrix` on the SuperLU path).
    """

    __slots__ = ("n", "shift", "perm", "L", "_dense", "_splu")

    def __init__(self, n, shift, perm, L, dense=None, splu=None):
        self.n = n
        self.shift = shift
        self.perm = perm
        self.L = L
        self._dense = dense
        self._splu = splu

    def solve(self, rhs) -> np.ndarray:
        rhs = as_vector(rhs, self.n, "rhs")
        if self._dense is not None:
            return scipy.linalg.cho_solve(self._dense, rhs)
        return self._splu.solve(rhs)


def assemble_normal_matrix(A: SparseMatrix, weights, support) -> SparseMatrix:
    """Weighted outer-product sum ``sum_{i in support} w_i A_i A_i^T``.

    ``weights`` is indexed by column of ``A``; only the entries on
    ``support`` are read and they must lie in [0, 1].  The result is
    symmetric to the bit: the lower triangle is computed and mirrored.
    """
    support = np.asarray(support, dtype=np.int64)
    if support.size == 0:
        return SparseMatrix(sp.csc_array((A.nrows, A.nrows)))
    if support.min() < 0 or support.max() >= A.ncols:
        raise InvalidSupportError("support index out of range")
    if np.unique(support).size != support.size:
        raise InvalidSupportError("support contains duplicate indices")
    weights = np.asarray(weights, dtype=np.float64)
    w = weights[support]
    if np.any(w < 0.0) or np.any(w > 1.0):
        raise ValueError("weights must lie in [0, 1] on the support")
    As = A.csc[:, support]
    prod = (As @ sp.diags_array(w)) @ As.T
    lower = sp.tril(prod, format="csc")
    mirrored = lower + sp.triu(lower.T, k=1)
    return SparseMatrix(mirrored)


def cholesky_shifted(M: SparseMatrix, shift: float) -> CholFactor:
    """Factor ``M + shift*I`` for a symmetric PSD ``M`` and ``shift > 0``.

    Dense LAPACK Cholesky for dimensions up to ``DENSE_FACTOR_MAX_DIM``;
    beyond that, SuperLU in symmetric mode with a minimum-degree ordering
    and diagonal pivoting, which reduces to a Cholesky-like LDL^T for
    positive definite input.
    """
    if M.nrows != M.ncols:
        raise ValueError("matrix must be square")
    if not shift > 0.0:
        raise ValueError("shift must be positive")
    n = M.nrows
    if n <= DENSE_FACTOR_MAX_DIM:
        dense = M.toarray()
        dense[np.diag_indices(n)] += shift
        try:
            factor = scipy.linalg.cho_factor(dense, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(str(exc)) from None
        return CholFactor(n, shift, np.arange(n), np.tril(factor[0]), dense=factor)
    shifted = (M.csc + shift * sp.eye_array(n, format="csc")).tocsc()
    lu = spla.splu(
        shifted,
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )
    diag_u = lu.U.diagonal()
    if np.any(diag_u <= 0.0) or not np.all(np.isfinite(diag_u)):
        raise NotPositiveDefiniteError("non-positive pivot in sparse factorization")
    return CholFactor(n, shift, lu.perm_c, SparseMatrix(lu.L.tocsc()), splu=lu)


def _operator_parts(op, diag):
    if callable(op):
        return op, diag
    if isinstance(op, SparseMatrix):
        return op.matvec, op.diagonal() if diag is None else diag
    arr = np.asarray(op, dtype=np.float64)
    return (lambda x: arr @ x), (np.diag(arr).copy() if diag is None else diag)


def conjugate_gradient(op, rhs, tol_abs: float, max_iter: int, diag=None):
    """Jacobi-preconditioned CG for a symmetric positive definite operator.

    ``op`` is a matrix (:class:`SparseMatrix` or dense array) or a matvec
    callable; pass ``diag`` for the preconditioner when using a callable.
    Returns ``(d, residual_norm)`` where the norm is the true final
    ``||op d - rhs||``; non-convergence is reported through it, never
    raised.
    """
    rhs = as_vector(rhs, name="rhs")
    matvec, d = _operator_parts(op, diag)
    n = rhs.shape[0]
    if d is None:
        d = np.ones(n)
    inv_diag = np.where(d > 0.0, 1.0 / np.where(d > 0.0, d, 1.0), 1.0)

    x = np.zeros(n)
    r = rhs.copy()
    rnorm = np.linalg.norm(r)
    if rnorm <= tol_abs:
        return x, rnorm
    s = inv_diag * r
    p = s.copy()
    rs = float(r @ s)
    for _ in range(max_iter):
        Ap = matvec(p)
        denom = float(p @ Ap)
        if denom <= 0.0:
            break
        alpha = rs / denom
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol_abs:
            break
        s = inv_diag * r
        rs_new = float(r @ s)
        p = s + (rs_new / rs) * p
        rs = rs_new
    true_res = rhs - matvec(x)
    return x, float(np.linalg.norm(true_res))


def independent_columns(A: SparseMatrix, candidate_cols, tol: float = 1e-10) -> np.ndarray:
    """Maximal linearly independent subset of the candidate columns.

    Rank-revealing QR with column pivoting; a diagonal R entry below
    ``tol`` times the largest one marks dependence.  The returned index
    array is sorted ascending and deterministic for fixed input.
    """
    cand = np.unique(np.asarray(candidate_cols, dtype=np.int64))
    if cand.size == 0:
        return cand
    if cand.min() < 0 or cand.max() >= A.ncols:
        raise InvalidSupportError("candidate column out of range")
    dense = A.cols(cand).toarray()
    r_mat, piv = scipy.linalg.qr(dense, mode="r", pivoting=True)
    diag = np.abs(np.diag(r_mat))
    if diag.size == 0 or diag[0] == 0.0:
        return np.empty(0, dtype=np.int64)
    rank = int(np.count_nonzero(diag >= tol * diag[0]))
    return np.sort(cand[piv[:rank]])


def nullspace_basis(B, tol: float = 1e-12) -> np.ndarray:
    """Orthonormal basis V of null(B) with ``||B V|| <= tol * ||B||``.

    ``B`` may be dense or a :class:`SparseMatrix`; the computation is a
    dense SVD (the callers only ever pass small restricted systems).
    A zero-row ``B`` yields the identity.
    """
    if isinstance(B, SparseMatrix):
        B = B.toarray()
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    nrows, ncols = B.shape
    if nrows == 0:
        return np.eye(ncols)
    _, svals, vt = scipy.linalg.svd(B, full_matrices=True)
    if svals.size == 0 or svals[0] == 0.0:
        return np.eye(ncols)
    rank = int(np.count_nonzero(svals > tol * svals[0]))
    return vt[rank:].T.copy()


def least_squares_solve(M, rhs) -> np.ndarray:
    """Minimum-norm least-squares solution of ``M x ~ rhs`` (pseudo-inverse)."""
    if isinstance(M, SparseMatrix):
        M = M.toarray()
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    rhs = as_vector(rhs, M.shape[0], "rhs")
    sol, _, _, _ = np.linalg.lstsq(M, rhs, rcond=None)
    return sol


def write_matrix_market(matrix: SparseMatrix, target) -> None:
    """Write coordinate Matrix Market with exact round-trip float text.

    Values are emitted as shortest-representation decimals (Python
    ``repr``), so read-after-write reproduces every stored value bit for
    bit.  Entries are ordered column-major for deterministic output.
    """
    coo = matrix.csc.tocoo()
    order = np.lexsort((coo.row, coo.col))
    lines = ["%%MatrixMarket matrix coordinate real general"]
    lines.append(f"{matrix.nrows} {matrix.ncols} {coo.nnz}")
    rows, cols, data = coo.row[order], coo.col[order], coo.data[order]
    for i, j, v in zip(rows, cols, data):
        lines.append(f"{i + 1} {j + 1} {float(v)!r}")
    text = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w", encoding="ascii") as fh:
            fh.write(text)


def read_matrix_market(source) -> SparseMatrix:
    """Read a coordinate Matrix Market file written by this module.

    Accepts real/integer general matrices plus symmetric storage (the
    mirrored half is filled in).
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="ascii") as fh:
            text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("%%MatrixMarket"):
        raise ValueError("missing MatrixMarket header")
    header = lines[0].split()
    if len(header) < 5 or header[1] != "matrix" or header[2] != "coordinate":
        raise ValueError(f"unsupported MatrixMarket header: {lines[0]}")
    field, symmetry = header[3], header[4]
    if field not in ("real", "integer"):
        raise ValueError(f"unsupported field type: {field}")
    if symmetry not in ("general", "symmetric"):
        raise ValueError(f"unsupported symmetry: {symmetry}")
    body = [ln for ln in lines[1:] if not ln.startswith("%")]
    dims = body[0].split()
    nrows, ncols, nnz = int(dims[0]), int(dims[1]), int(dims[2])
    if len(body) - 1 != nnz:
        raise ValueError(f"expected {nnz} entries, found {len(body) - 1}")
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    for k, ln in enumerate(body[1:]):
        parts = ln.split()
        rows[k] = int(parts[0]) - 1
        cols[k] = int(parts[1]) - 1
        vals[k] = float(parts[2])
    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    return SparseMatrix.from_coo(nrows, ncols, rows, cols, vals)
