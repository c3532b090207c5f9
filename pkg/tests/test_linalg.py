import numpy as np
import pytest
import scipy.sparse as sp

from multirate.errors import SingularMatrix
from multirate.linalg import (Block, BlockSystem, DirectSolver, SparseMatrix, assemble_coo,
                              assemble_from_triplets, solve_direct, symmetric_part_cholesky_ok)


def test_duplicates_are_summed():
    A = assemble_from_triplets(1, 1, [(0, 0, 1.0), (0, 0, 2.0)])
    assert A.toarray().tolist() == [[3.0]] and A.nnz == 1


def test_empty_triplets():
    A = assemble_from_triplets(3, 2, [])
    assert A.shape == (3, 2) and A.nnz == 0
    assert A.indptr.tolist() == [0, 0, 0, 0]


def test_identity_product():
    I = assemble_from_triplets(2, 2, [(0, 0, 1), (1, 1, 1)])
    assert (I @ [3, 4]).tolist() == [3.0, 4.0]


def test_out_of_range():
    with pytest.raises(IndexError):
        assemble_from_triplets(2, 2, [(2, 0, 1.0)])


def test_assembly_independent_of_order():
    rng = np.random.default_rng(3)
    n = 40
    i = rng.integers(0, n, 2000)
    j = rng.integers(0, n, 2000)
    v = rng.normal(size=2000) * 10.0 ** rng.integers(-8, 8, 2000)
    A = assemble_coo(n, n, i, j, v)
    for _ in range(5):
        p = rng.permutation(i.size)
        assert A.identical(assemble_coo(n, n, i[p], j[p], v[p]))


def test_csr_invariants():
    A = SparseMatrix(sp.random(30, 30, density=0.2, random_state=1, format="coo"))
    for r in range(30):
        cols = A.indices[A.indptr[r]:A.indptr[r + 1]]
        assert np.all(np.diff(cols) > 0)
    assert np.all(np.diff(A.indptr) >= 0)
    with pytest.raises(ValueError):
        SparseMatrix(np.array([[np.nan]]))


def test_solve_examples():
    assert solve_direct(SparseMatrix(np.eye(1)), [5.0]).tolist() == [5.0]
    x = solve_direct(SparseMatrix(np.array([[2.0, 1.0], [1.0, 3.0]])), [3.0, 4.0])
    assert np.allclose(x, [1.0, 1.0], atol=1e-15)


def test_random_spd_residual():
    rng = np.random.default_rng(42)
    B = rng.normal(size=(50, 50))
    A = SparseMatrix(B @ B.T + 50 * np.eye(50))
    b = rng.normal(size=50)
    x = solve_direct(A, b)
    bound = 1e-10 * (A.norm_inf() * np.abs(x).max() + np.abs(b).max())
    assert np.abs(A @ x - b).max() <= bound


def test_singular():
    with pytest.raises(SingularMatrix):
        DirectSolver(SparseMatrix(np.array([[1.0, 2.0], [2.0, 4.0]])))


def test_matrix_market(tmp_path):
    A = SparseMatrix(np.array([[1.0, 0.0], [2.0, 3.0]]))
    A.write_matrix_market(tmp_path / "a.mtx")
    import scipy.io
    assert np.array_equal(scipy.io.mmread(str(tmp_path / "a.mtx")).toarray(), A.toarray())


@pytest.mark.parametrize("M, ok", [
    (np.eye(3), True),
    (np.array([[0.0, 1.0], [-1.0, 0.0]]), False),
    (np.array([[1.0, 5.0], [-5.0, 1.0]]), True),
    (np.array([[1.0, 2.0], [2.0, 1.0]]), False),
])
def test_symmetric_part_cholesky(M, ok):
    assert symmetric_part_cholesky_ok(SparseMatrix(M)) is ok


def test_symmetric_part_sparse_path():
    n = 300
    T = sp.diags([-1.0, 2.5, -1.0], [-1, 0, 1], shape=(n, n)) + sp.diags([0.7], [2], shape=(n, n))
    assert symmetric_part_cholesky_ok(T, dense_limit=10)
    assert not symmetric_part_cholesky_ok(T - 3.0 * sp.eye(n), dense_limit=10)


def test_block_system_labels():
    blocks = [Block(1, 1, "u", 2), Block(1, 2, "u", 2), Block(2, 1, "u", 3)]
    bs = BlockSystem(blocks, SparseMatrix(sp.eye(7)), np.arange(7.0))
    assert bs.size == 7
    labels = [bs.label(i) for i in range(7)]
    assert len(set(labels)) == 7
    assert all(bs.index(*lab) == i for i, lab in enumerate(labels))
    assert bs.block_slice(2, 1, "u") == slice(4, 7)
    assert np.array_equal(bs.solve(), np.arange(7.0))
    with pytest.raises(ValueError):
        BlockSystem(blocks, SparseMatrix(sp.eye(6)), np.zeros(6))
