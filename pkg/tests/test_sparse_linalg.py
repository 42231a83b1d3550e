import io

import numpy as np
import pytest

from polyproj.sparse_linalg import (
    DENSE_FACTOR_MAX_DIM,
    InvalidSupportError,
    NotPositiveDefiniteError,
    SparseMatrix,
    assemble_normal_matrix,
    cholesky_shifted,
    conjugate_gradient,
    independent_columns,
    least_squares_solve,
    nullspace_basis,
    read_matrix_market,
    write_matrix_market,
)


def rand_sparse(rng, m, n, density=0.3):
    mask = rng.random((m, n)) < density
    vals = rng.standard_normal((m, n)) * mask
    return SparseMatrix.from_dense(vals)


class TestSparseMatrix:
    def test_construction_canonicalizes(self):
        A = SparseMatrix.from_coo(2, 2, [0, 0, 1], [0, 0, 1], [1.0, 2.0, 0.0])
        assert A.nnz == 1  # duplicates summed, explicit zero dropped
        assert A.toarray()[0, 0] == 3.0
        csc = A.csc
        for j in range(csc.shape[1]):
            idx = csc.indices[csc.indptr[j] : csc.indptr[j + 1]]
            assert np.all(np.diff(idx) > 0)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            SparseMatrix.from_dense(np.array([[np.nan, 1.0]]))

    def test_column_norms_and_zero_column(self):
        A = SparseMatrix.from_dense(np.array([[3.0, 0.0], [4.0, 0.0]]))
        assert np.allclose(A.column_norms(), [5.0, 0.0])
        assert A.has_zero_column()

    def test_cols_out_of_range(self):
        A = SparseMatrix.identity(3)
        with pytest.raises(InvalidSupportError):
            A.cols([3])


class TestAssembleNormalMatrix:
    def test_identity_case(self):
        A = SparseMatrix.identity(2)
        M = assemble_normal_matrix(A, np.ones(2), [0, 1])
        assert np.array_equal(M.toarray(), np.eye(2))

    def test_hand_sum_of_outer_products(self):
        A = SparseMatrix.from_dense(np.array([[1.0, 1.0]]))
        M = assemble_normal_matrix(A, np.ones(2), [0, 1])
        assert np.array_equal(M.toarray(), np.array([[2.0]]))

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(42)
        A = rand_sparse(rng, 5, 8, 0.6)
        weights = rng.uniform(0.0, 1.0, 8)
        support = np.array([0, 2, 3, 7])
        M = assemble_normal_matrix(A, weights, support)
        D = A.toarray()
        w_full = np.zeros(8)
        w_full[support] = weights[support]
        expected = D @ np.diag(w_full) @ D.T
        assert np.allclose(M.toarray(), expected, atol=1e-14)

    def test_bit_symmetry_and_psd(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            m, n = rng.integers(2, 8), rng.integers(2, 12)
            A = rand_sparse(rng, m, n, 0.5)
            w = rng.uniform(0.0, 1.0, n)
            sup = rng.choice(n, size=rng.integers(1, n + 1), replace=False)
            M = assemble_normal_matrix(A, w, sup).toarray()
            assert np.array_equal(M, M.T)
            evals = np.linalg.eigvalsh(M)
            norm = max(np.abs(evals).max(), 1e-300)
            assert evals.min() >= -1e-12 * norm

    def test_invalid_support(self):
        A = SparseMatrix.identity(2)
        with pytest.raises(InvalidSupportError):
            assemble_normal_matrix(A, np.ones(2), [0, 2])
        with pytest.raises(InvalidSupportError):
            assemble_normal_matrix(A, np.ones(2), [0, 0])

    def test_weights_range_checked(self):
        A = SparseMatrix.identity(2)
        with pytest.raises(ValueError):
            assemble_normal_matrix(A, np.array([1.5, 0.5]), [0, 1])


class TestCholeskyShifted:
    def test_scalar(self):
        M = SparseMatrix.from_dense(np.array([[2.0]]))
        fac = cholesky_shifted(M, 1.0)
        assert np.allclose(fac.solve(np.array([3.0])), [1.0])

    def test_zero_matrix_small_shift(self):
        M = SparseMatrix.from_dense(np.zeros((1, 1)))
        fac = cholesky_shifted(M, 1e-3)
        assert np.allclose(fac.solve(np.array([-1.0])), [-1000.0])

    def test_matches_dense_lu_oracle(self):
        rng = np.random.default_rng(5)
        B = rng.standard_normal((20, 20))
        M = SparseMatrix.from_dense(B @ B.T)
        shift = 0.5
        fac = cholesky_shifted(M, shift)
        rhs = rng.standard_normal(20)
        expected = np.linalg.solve(M.toarray() + shift * np.eye(20), rhs)
        assert np.linalg.norm(fac.solve(rhs) - expected) <= 1e-10 * (1 + np.linalg.norm(expected))

    def test_inverse_property_random_psd(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = int(rng.integers(2, 30))
            B = rng.standard_normal((n, n))
            M = B @ B.T + 1e-4 * np.eye(n)  # keeps cond well under 1e8
            fac = cholesky_shifted(SparseMatrix.from_dense(M), 1e-6)
            r = rng.standard_normal(n)
            d = fac.solve(r)
            err = np.linalg.norm((M + 1e-6 * np.eye(n)) @ d - r)
            assert err <= 1e-12 * (1 + np.linalg.norm(r)) * np.linalg.cond(M)

    def test_sparse_path_matches_dense(self):
        rng = np.random.default_rng(3)
        n = DENSE_FACTOR_MAX_DIM + 20
        diag = np.arange(1.0, n + 1.0)
        off = 0.3 * np.ones(n - 1)
        M_dense = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
        M = SparseMatrix.from_dense(M_dense)
        fac = cholesky_shifted(M, 0.1)
        rhs = rng.standard_normal(n)
        expected = np.linalg.solve(M_dense + 0.1 * np.eye(n), rhs)
        assert np.linalg.norm(fac.solve(rhs) - expected) <= 1e-10 * (1 + np.linalg.norm(expected))

    def test_not_psd_raises(self):
        M = SparseMatrix.from_dense(np.array([[1.0, 0.0], [0.0, -5.0]]))
        with pytest.raises(NotPositiveDefiniteError):
            cholesky_shifted(M, 1e-8)

    def test_shift_must_be_positive(self):
        with pytest.raises(ValueError):
            cholesky_shifted(SparseMatrix.identity(2), 0.0)


class TestConjugateGradient:
    def test_identity(self):
        d, res = conjugate_gradient(np.eye(3), np.array([1.0, 2.0, 3.0]), 1e-14, 10)
        assert np.allclose(d, [1.0, 2.0, 3.0])
        assert res <= 1e-12

    def test_diagonal(self):
        M = np.diag([1.0, 10.0])
        d, res = conjugate_gradient(M, np.array([1.0, 10.0]), 1e-12, 10)
        assert np.allclose(d, [1.0, 1.0], atol=1e-10)

    def test_matches_direct_solve(self):
        rng = np.random.default_rng(17)
        B = rng.standard_normal((30, 30))
        M = B @ B.T + np.eye(30)
        rhs = rng.standard_normal(30)
        tol = 1e-11
        d, res = conjugate_gradient(M, rhs, tol, 500)
        assert res <= tol
        direct = cholesky_shifted(SparseMatrix.from_dense(M - 1e-9 * np.eye(30)), 1e-9)
        assert np.linalg.norm(d - direct.solve(rhs)) <= 1e-8

    def test_reports_nonconvergence_via_residual(self):
        rng = np.random.default_rng(2)
        B = rng.standard_normal((40, 40))
        M = B @ B.T + 1e-8 * np.eye(40)
        rhs = rng.standard_normal(40)
        _, res = conjugate_gradient(M, rhs, 1e-16, 2)
        assert res > 1e-16  # caller decides what to do


class TestIndependentColumns:
    def test_orthonormal_kept(self):
        A = SparseMatrix.identity(2)
        kept = independent_columns(A, [0, 1])
        assert set(kept) == {0, 1}

    def test_duplicate_scalar_columns(self):
        # columns (1,2), (2,4), (1,0): the duplicate pair collapses to
        # one representative; result must be a maximal independent set
        A = SparseMatrix.from_dense(np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 0.0]]))
        kept = independent_columns(A, [0, 1, 2])
        assert len(kept) == 2
        assert 2 in kept  # (1,0) is independent of the duplicated direction
        dense = A.toarray()
        assert np.linalg.matrix_rank(dense[:, kept]) == 2

    def test_zero_column(self):
        A = SparseMatrix.from_coo(2, 2, [0], [0], [1.0])
        assert independent_columns(A, [1]).size == 0

    def test_empty_candidates(self):
        A = SparseMatrix.identity(2)
        assert independent_columns(A, []).size == 0

    def test_maximal_and_independent_brute_force(self):
        rng = np.random.default_rng(23)
        for trial in range(25):
            m = int(rng.integers(2, 6))
            n = int(rng.integers(2, 10))
            base = rng.standard_normal((m, n))
            # inject exact dependencies
            for _ in range(rng.integers(0, 3)):
                i, j = rng.integers(0, n, 2)
                base[:, i] = rng.uniform(0.5, 2.0) * base[:, j]
            A = SparseMatrix.from_dense(base)
            kept = independent_columns(A, np.arange(n))
            sub = base[:, kept]
            assert np.linalg.matrix_rank(sub, tol=1e-8) == len(kept)
            for j in range(n):
                if j in kept:
                    continue
                aug = np.column_stack([sub, base[:, j]])
                assert np.linalg.matrix_rank(aug, tol=1e-8) == len(kept)

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        A = rand_sparse(rng, 4, 9, 0.7)
        first = independent_columns(A, np.arange(9))
        again = independent_columns(A, np.arange(9))
        assert np.array_equal(first, again)


class TestNullspaceBasis:
    def test_single_row(self):
        V = nullspace_basis(np.array([[1.0, 0.0]]))
        assert V.shape == (2, 1)
        assert abs(V[0, 0]) <= 1e-14
        assert abs(abs(V[1, 0]) - 1.0) <= 1e-14

    def test_zero_rows_gives_identity(self):
        V = nullspace_basis(np.zeros((0, 3)))
        assert np.array_equal(V, np.eye(3))

    def test_random_vs_svd(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            r, q = int(rng.integers(1, 8)), int(rng.integers(2, 20))
            B = rng.standard_normal((r, q))
            V = nullspace_basis(B)
            assert np.linalg.norm(B @ V) <= 1e-12 * max(1.0, np.linalg.norm(B))
            assert V.shape[1] == q - np.linalg.matrix_rank(B)


class TestLeastSquaresSolve:
    def test_minimum_norm_on_singular(self):
        M = np.array([[1.0, 1.0], [1.0, 1.0]])
        x = least_squares_solve(M, np.array([2.0, 2.0]))
        assert np.allclose(x, [1.0, 1.0])

    def test_identity(self):
        rhs = np.array([3.0, -1.0, 2.0])
        assert np.allclose(least_squares_solve(np.eye(3), rhs), rhs)

    def test_rank_deficient_matches_pinv(self):
        rng = np.random.default_rng(19)
        M = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 4))
        rhs = rng.standard_normal(6)
        x = least_squares_solve(M, rhs)
        expected = np.linalg.pinv(M) @ rhs
        assert np.linalg.norm(x - expected) <= 1e-10


class TestMatrixMarket:
    def test_exact_round_trip(self):
        rng = np.random.default_rng(101)
        A = rand_sparse(rng, 7, 11, 0.4)
        buf = io.StringIO()
        write_matrix_market(A, buf)
        back = read_matrix_market(io.StringIO(buf.getvalue()))
        assert back.shape == A.shape
        assert np.array_equal(back.csc.indptr, A.csc.indptr)
        assert np.array_equal(back.csc.indices, A.csc.indices)
        assert np.array_equal(back.csc.data, A.csc.data)  # bit identical

    def test_symmetric_storage_expands(self):
        text = "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 2.0\n2 1 3.0\n"
        A = read_matrix_market(io.StringIO(text))
        assert np.array_equal(A.toarray(), np.array([[2.0, 3.0], [3.0, 0.0]]))

    def test_bad_header(self):
        with pytest.raises(ValueError):
            read_matrix_market(io.StringIO("not a matrix\n"))
        with pytest.raises(ValueError):
            read_matrix_market(io.StringIO("%%MatrixMarket matrix array real general\n1 1\n2.0\n"))
