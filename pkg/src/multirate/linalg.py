"""Sparse assembly, block systems and the direct solver.

Storage and factorization are delegated to ``scipy.sparse`` (CSR storage,
SuperLU with partial pivoting). Triplet reduction is done here so that the
assembled matrix does not depend on the order triplets arrive in.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularMatrix


class SparseMatrix:
    """Immutable CSR matrix with sorted, unique column indices per row."""

    __slots__ = ("_csr",)

    def __init__(self, matrix):
        csr = sp.csr_matrix(matrix, dtype=float, copy=True)
        csr.sum_duplicates()
        csr.sort_indices()
        if not np.all(np.isfinite(csr.data)):
            raise ValueError("stored values must be finite")
        for arr in (csr.data, csr.indices, csr.indptr):
            arr.flags.writeable = False
        self._csr = csr

    @property
    def shape(self) -> tuple:
        return self._csr.shape

    @property
    def indptr(self) -> np.ndarray:
        return self._csr.indptr

    @property
    def indices(self) -> np.ndarray:
        return self._csr.indices

    @property
    def data(self) -> np.ndarray:
        return self._csr.data

    @property
    def nnz(self) -> int:
        return self._csr.nnz

    def to_scipy(self) -> sp.csr_matrix:
        return self._csr.copy()

    def toarray(self) -> np.ndarray:
        return self._csr.toarray()

    def __matmul__(self, x):
        return self._csr @ np.asarray(x, dtype=float)

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix(self._csr.T)

    @property
    def T(self) -> "SparseMatrix":
        return self.transpose()

    def norm_inf(self) -> float:
        if self.nnz == 0:
            return 0.0
        return float(abs(self._csr).sum(axis=1).max())

    def identical(self, other: "SparseMatrix") -> bool:
        """Bit-level equality of shape and CSR arrays."""
        return (self.shape == other.shape
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and self.data.tobytes() == other.data.tobytes())

    def write_matrix_market(self, path) -> None:
        scipy.io.mmwrite(str(path), self._csr)

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


def assemble_coo(n_rows: int, n_cols: int, rows, cols, values) -> SparseMatrix:
    """Sum duplicate ``(i, j)`` entries in a canonical order.

    Entries are sorted by row, column and value before reduction, so any
    permutation of the same triplet multiset gives bit-identical output.
    """
    i = np.asarray(rows, dtype=np.int64).ravel()
    j = np.asarray(cols, dtype=np.int64).ravel()
    v = np.asarray(values, dtype=float).ravel()
    if not (i.size == j.size == v.size):
        raise ValueError("rows, cols and values must have equal length")
    if i.size and (i.min() < 0 or i.max() >= n_rows or j.min() < 0 or j.max() >= n_cols):
        raise IndexError(f"triplet index out of range for shape ({n_rows}, {n_cols})")
    if i.size == 0:
        return SparseMatrix(sp.csr_matrix((n_rows, n_cols)))
    order = np.lexsort((v, j, i))
    i, j, v = i[order], j[order], v[order]
    key = i * n_cols + j
    start = np.flatnonzero(np.concatenate([[True], key[1:] != key[:-1]]))
    summed = np.add.reduceat(v, start)
    ui, uj = i[start], j[start]
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(indptr, ui + 1, 1)
    indptr = np.cumsum(indptr)
    return SparseMatrix(sp.csr_matrix((summed, uj, indptr), shape=(n_rows, n_cols)))


def assemble_from_triplets(n_rows: int, n_cols: int,
                           triplets: Iterable[tuple]) -> SparseMatrix:
    trip = list(triplets)
    if not trip:
        return assemble_coo(n_rows, n_cols, [], [], [])
    i, j, v = zip(*trip)
    return assemble_coo(n_rows, n_cols, i, j, v)


class DirectSolver:
    """Sparse LU factorization reused across right-hand sides."""

    def __init__(self, matrix, refine_steps: int = 2):
        A = matrix.to_scipy() if isinstance(matrix, SparseMatrix) else sp.csr_matrix(matrix)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self._A = A
        self._norm = float(abs(A).sum(axis=1).max()) if A.nnz else 0.0
        self.refine_steps = refine_steps
        if A.shape[0] == 0:
            self._lu = None
            return
        try:
            self._lu = spla.splu(A.tocsc())
        except RuntimeError as exc:
            raise SingularMatrix(str(exc)) from None
        diag = np.abs(self._lu.U.diagonal())
        if diag.size and (not np.all(np.isfinite(diag))
                          or diag.min() <= 1e-15 * max(diag.max(), 1e-300)):
            raise SingularMatrix("matrix is singular to working precision")

    @property
    def shape(self):
        return self._A.shape

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self._lu is None:
            return np.zeros_like(b)
        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularMatrix("solution is not finite")
        bound = 1e-10 * (self._norm * np.abs(x).max() + np.abs(b).max())
        for _ in range(self.refine_steps):
            r = b - self._A @ x
            if np.abs(r).max() <= bound:
                break
            x = x + self._lu.solve(r)
        return x


def solve_direct(A, b) -> np.ndarray:
    return DirectSolver(A).solve(b)


def symmetric_part_cholesky_ok(A, dense_limit: int = 4000) -> bool:
    """Whether ``(A + A^T)/2`` is positive definite.

    Pivots must exceed ``1e-14`` times the largest diagonal entry. Small
    matrices use a dense Cholesky; larger ones an unpivoted sparse LDL^T
    via SuperLU in symmetric mode.
    """
    M = A.to_scipy() if isinstance(A, SparseMatrix) else sp.csr_matrix(A)
    if M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    S = ((M + M.T) * 0.5).tocsc()
    n = S.shape[0]
    if n == 0:
        return True
    dmax = float(S.diagonal().max())
    if dmax <= 0.0:
        return False
    tol = 1e-14 * dmax
    if n <= dense_limit:
        try:
            L = scipy.linalg.cholesky(S.toarray(), lower=True)
        except np.linalg.LinAlgError:
            return False
        return bool(np.all(np.diag(L) ** 2 > tol))
    try:
        lu = spla.splu(S, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError:
        return False
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return False
    return bool(np.all(lu.U.diagonal() > tol))


@dataclass(frozen=True)
class Block:
    subproblem: int
    micro: int
    field: str
    size: int


class BlockSystem:
    """Monolithic linear system of one macro step with labeled unknowns.

    The unknown vector is the concatenation of ``blocks``; unknown ``i`` is
    labeled ``(subproblem, micro index, field, spatial index)``.
    """

    def __init__(self, blocks: Sequence[Block], matrix: SparseMatrix, rhs):
        self.blocks = tuple(blocks)
        self.offsets = np.concatenate([[0], np.cumsum([b.size for b in self.blocks])])
        self.matrix = matrix
        self.rhs = np.asarray(rhs, dtype=float)
        n = int(self.offsets[-1])
        if matrix.shape != (n, n) or self.rhs.shape != (n,):
            raise ValueError(
                f"block sizes sum to {n}, matrix {matrix.shape}, rhs {self.rhs.shape}")
        self._lookup = {(b.subproblem, b.micro, b.field): k for k, b in enumerate(self.blocks)}

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    def label(self, i: int) -> tuple:
        k = int(np.searchsorted(self.offsets, i, side="right")) - 1
        if not 0 <= i < self.size:
            raise IndexError(i)
        b = self.blocks[k]
        return (b.subproblem, b.micro, b.field, int(i - self.offsets[k]))

    def index(self, subproblem: int, micro: int, field: str, spatial: int) -> int:
        k = self._lookup[(subproblem, micro, field)]
        if not 0 <= spatial < self.blocks[k].size:
            raise IndexError(spatial)
        return int(self.offsets[k] + spatial)

    def block_slice(self, subproblem: int, micro: int, field: str) -> slice:
        k = self._lookup[(subproblem, micro, field)]
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def solve(self) -> np.ndarray:
        return solve_direct(self.matrix, self.rhs)
