import numpy as np
import pytest

from elmdoc.linalg import NotPositiveDefiniteError, gram, matmul, spd_solve


def naive_matmul(a, b):
    """Triple-loop reference product."""
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def gauss_jordan_inverse(a):
    """Explicit inverse by Gauss-Jordan elimination with partial pivoting."""
    n = a.shape[0]
    aug = np.hstack([np.array(a, dtype=np.float64), np.eye(n)])
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(aug[col:, col])))
        aug[[col, pivot]] = aug[[pivot, col]]
        aug[col] /= aug[col, col]
        for row in range(n):
            if row != col:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, n:]


class TestMatmul:
    def test_identity(self):
        m = np.random.default_rng(0).normal(size=(3, 4))
        assert np.array_equal(matmul(np.eye(3), m), m)

    def test_hand_checked_2x2(self):
        out = matmul([[1.0, 2.0], [3.0, 4.0]], [[0.0], [1.0]])
        assert np.array_equal(out, [[2.0], [4.0]])

    def test_matches_triple_loop_exactly_on_integers(self):
        # integer-valued entries make every summation order exact, so the
        # comparison against the naive loop can demand bit equality
        gen = np.random.default_rng(1)
        a = gen.integers(-9, 10, size=(7, 5)).astype(np.float64)
        b = gen.integers(-9, 10, size=(5, 3)).astype(np.float64)
        assert np.array_equal(matmul(a, b), naive_matmul(a, b))

    def test_matches_triple_loop_on_floats(self):
        gen = np.random.default_rng(2)
        a = gen.normal(size=(7, 5))
        b = gen.normal(size=(5, 3))
        assert np.allclose(matmul(a, b), naive_matmul(a, b), rtol=0, atol=1e-12)

    def test_dimension_mismatch_reports_both_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(np.zeros((2, 3)), np.zeros((2, 2)))

    def test_rejects_nonfinite(self):
        bad = np.array([[1.0, np.nan]])
        with pytest.raises(ValueError, match="non-finite"):
            matmul(bad, np.zeros((2, 1)))

    def test_associativity(self):
        gen = np.random.default_rng(3)
        for _ in range(20):
            a = gen.normal(size=(4, 6))
            b = gen.normal(size=(6, 5))
            c = gen.normal(size=(5, 3))
            left = matmul(matmul(a, b), c)
            right = matmul(a, matmul(b, c))
            err = np.linalg.norm(left - right) / np.linalg.norm(left)
            assert err <= 1e-10


class TestGram:
    def test_column_vector(self):
        assert np.array_equal(gram([[1.0], [2.0], [3.0]]), [[14.0]])

    def test_orthonormal_gives_identity(self):
        q, _ = np.linalg.qr(np.random.default_rng(4).normal(size=(3, 3)))
        assert np.allclose(gram(q), np.eye(3), rtol=0, atol=1e-12)

    def test_matches_transpose_then_matmul(self):
        a = np.random.default_rng(5).normal(size=(50, 20))
        assert np.allclose(gram(a), matmul(a.T, a), rtol=0, atol=1e-12)

    def test_exactly_symmetric(self):
        g = gram(np.random.default_rng(6).normal(size=(40, 25)))
        assert np.array_equal(g, g.T)

    def test_quadratic_form_nonnegative(self):
        gen = np.random.default_rng(7)
        g = gram(gen.normal(size=(10, 8)))
        for _ in range(50):
            x = gen.normal(size=8)
            assert x @ g @ x >= -1e-10

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            gram(np.zeros((0, 0)))


class TestSpdSolve:
    def test_identity_system(self):
        b = np.random.default_rng(8).normal(size=(4, 2))
        assert np.allclose(spd_solve(np.eye(4), b), b, rtol=0, atol=1e-14)

    def test_diagonal_system(self):
        x = spd_solve([[4.0, 0.0], [0.0, 9.0]], [[2.0], [3.0]])
        assert np.allclose(x, [[0.5], [1.0 / 3.0]], rtol=0, atol=1e-15)

    def test_matches_gauss_jordan_inverse(self):
        gen = np.random.default_rng(9)
        m = gen.normal(size=(30, 30))
        a = m.T @ m + np.eye(30)
        a = (a + a.T) / 2
        b = gen.normal(size=(30, 4))
        expected = gauss_jordan_inverse(a) @ b
        err = np.linalg.norm(spd_solve(a, b) - expected) / np.linalg.norm(expected)
        assert err <= 1e-8

    def test_residual_property(self):
        gen = np.random.default_rng(10)
        for trial in range(10):
            n = int(gen.integers(2, 40))
            m = gen.normal(size=(n, n))
            a = m.T @ m + np.eye(n)
            a = (a + a.T) / 2
            b = gen.normal(size=(n, 3))
            x = spd_solve(a, b)
            assert np.linalg.norm(a @ x - b) <= 1e-8 * np.linalg.norm(b)

    def test_not_positive_definite_names_pivot(self):
        a = np.diag([1.0, -1.0, 2.0])
        with pytest.raises(NotPositiveDefiniteError, match="pivot 1") as info:
            spd_solve(a, np.zeros((3, 1)))
        assert info.value.pivot == 1

    def test_asymmetric_rejected(self):
        a = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ValueError, match="not symmetric"):
            spd_solve(a, np.zeros((2, 1)))

    def test_tiny_asymmetry_absorbed(self):
        # round-off-scale asymmetry is symmetrized away, not rejected
        a = np.eye(3)
        a[0, 1] = 1e-13
        x = spd_solve(a, np.ones((3, 1)))
        assert np.allclose(x, np.ones((3, 1)), rtol=0, atol=1e-12)

    def test_non_square_rejected(self):
        with pytest.raises(ValueError, match="square"):
            spd_solve(np.zeros((2, 3)), np.zeros((2, 1)))

    def test_rhs_mismatch_rejected(self):
        with pytest.raises(ValueError, match="right-hand side"):
            spd_solve(np.eye(3), np.zeros((2, 1)))
