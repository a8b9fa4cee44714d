import numpy as np
import pytest

from attnpool.tensors import (ShapeError, as_matrix, elementwise_mul,
                              flatten_spatial, matmul, trace, transpose,
                              unflatten_spatial)


class TestMatmul:
    def test_identity_case(self):
        out = matmul(np.eye(2), np.array([[2.0], [3.0]]))
        np.testing.assert_array_equal(out, [[2.0], [3.0]])

    def test_hand_computed(self):
        out = matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[1.0], [1.0]]))
        np.testing.assert_array_equal(out, [[3.0], [7.0]])

    def test_zero_case(self):
        rng = np.random.default_rng(0)
        b = rng.standard_normal((2, 5))
        np.testing.assert_array_equal(matmul(np.zeros((2, 2)), b), np.zeros((2, 5)))

    def test_identity_is_bit_exact(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((4, 4))
        assert np.array_equal(matmul(np.eye(4), a), a)
        assert np.array_equal(matmul(a, np.eye(4)), a)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(np.zeros((2, 3)), np.zeros((2, 2)))


class TestTranspose:
    def test_hand_computed(self):
        out = transpose(np.array([[1.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_array_equal(out, [[1.0, 3.0], [2.0, 4.0]])

    def test_symmetric(self):
        np.testing.assert_array_equal(transpose(np.eye(3)), np.eye(3))

    def test_involution(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((3, 5))
        np.testing.assert_array_equal(transpose(transpose(a)), a)

    def test_rejects_non_2d(self):
        with pytest.raises(ShapeError):
            transpose(np.zeros(3))


class TestTrace:
    def test_identity(self):
        assert trace(np.eye(3)) == 3.0

    def test_hand_computed(self):
        assert trace(np.array([[2.0, 9.0], [9.0, 5.0]])) == 7.0

    def test_dot_identity(self):
        # Tr(A B^T) equals the inner product of the flattened matrices
        rng = np.random.default_rng(3)
        a = rng.standard_normal((3, 3))
        b = rng.standard_normal((3, 3))
        assert trace(a @ b.T) == pytest.approx(float(a.ravel() @ b.ravel()), rel=1e-12)

    def test_cyclic_identity(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            a, b, c = (rng.standard_normal((3, 3)) for _ in range(3))
            lhs = trace(a @ b @ c)
            rhs = trace(c @ a @ b)
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)

    def test_rejects_non_square(self):
        with pytest.raises(ShapeError):
            trace(np.zeros((2, 3)))


class TestElementwiseMul:
    def test_ones(self):
        np.testing.assert_array_equal(
            elementwise_mul(np.array([2.0, 3.0]), np.array([1.0, 1.0])), [2.0, 3.0])

    def test_hand_computed(self):
        np.testing.assert_array_equal(
            elementwise_mul(np.array([1.0, -2.0]), np.array([3.0, 4.0])), [3.0, -8.0])

    def test_zero(self):
        u = np.array([5.0, -1.0, 2.0])
        np.testing.assert_array_equal(elementwise_mul(u, np.zeros(3)), np.zeros(3))

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            elementwise_mul(np.zeros(2), np.zeros(3))


class TestConstructionAndShapes:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            as_matrix([1.0, np.nan], shape=(2,))
        with pytest.raises(ValueError, match="finite"):
            as_matrix([np.inf])

    def test_shape_count_must_match(self):
        with pytest.raises(ShapeError):
            as_matrix([1.0, 2.0, 3.0], shape=(2, 2))

    def test_rejects_nonpositive_dims(self):
        with pytest.raises(ShapeError):
            as_matrix([], shape=(0, 3))

    def test_row_major_flatten_round_trip(self):
        rng = np.random.default_rng(5)
        grid = rng.standard_normal((3, 4, 2))
        flat = flatten_spatial(grid)
        # loc = row*n2 + col
        assert np.array_equal(flat[1 * 4 + 2], grid[1, 2])
        assert np.array_equal(unflatten_spatial(flat, 3, 4), grid)


def test_evaluation_order_associativity():
    # (X a)^T (X b) == a^T (X^T (X b)) at f64 tolerance
    rng = np.random.default_rng(6)
    for _ in range(50):
        n, f = rng.integers(1, 12, size=2)
        X = rng.standard_normal((n, f))
        a = rng.standard_normal(f)
        b = rng.standard_normal(f)
        lhs = float((X @ a) @ (X @ b))
        rhs = float(a @ (X.T @ (X @ b)))
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
