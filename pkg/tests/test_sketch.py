import numpy as np
import pytest

from attnpool.autograd import Tape, finite_diff_check
from attnpool.sketch import (SketchParams, cbp_pool, circular_convolve,
                             count_sketch, tensor_sketch)
from attnpool.tensors import ShapeError


class TestCountSketch:
    def test_hand_example(self):
        out = count_sketch(np.array([1.0, 2.0, 3.0]),
                           np.array([0, 2, 0]), np.array([1, -1, 1]), d=4)
        np.testing.assert_array_equal(out, [4.0, 0.0, -2.0, 0.0])

    def test_collisions_accumulate(self):
        out = count_sketch(np.array([1.0, 1.0]), np.array([1, 1]),
                           np.array([1, 1]), d=2)
        np.testing.assert_array_equal(out, [0.0, 2.0])

    def test_linear_in_x(self):
        rng = np.random.default_rng(0)
        x, y = rng.standard_normal(6), rng.standard_normal(6)
        h = rng.integers(0, 8, size=6)
        s = rng.choice([-1, 1], size=6)
        np.testing.assert_allclose(count_sketch(x + y, h, s, 8),
                                   count_sketch(x, h, s, 8) + count_sketch(y, h, s, 8))

    def test_rejects_out_of_range_hash(self):
        with pytest.raises(ShapeError):
            count_sketch(np.ones(2), np.array([0, 5]), np.array([1, 1]), d=4)

    def test_rejects_table_mismatch(self):
        with pytest.raises(ShapeError):
            count_sketch(np.ones(3), np.array([0, 1]), np.array([1, 1, 1]), d=4)


class TestCircularConvolve:
    def test_delta_is_identity(self):
        u = np.array([1.0, 2.0, 3.0])
        delta = np.array([1.0, 0.0, 0.0])
        np.testing.assert_allclose(circular_convolve(u, delta), u)

    def test_shifted_delta_rotates(self):
        u = np.array([1.0, 2.0, 3.0])
        e1 = np.array([0.0, 1.0, 0.0])
        np.testing.assert_allclose(circular_convolve(u, e1), [3.0, 1.0, 2.0])

    def test_matches_fft(self):
        rng = np.random.default_rng(1)
        u, v = rng.standard_normal(16), rng.standard_normal(16)
        ref = np.real(np.fft.ifft(np.fft.fft(u) * np.fft.fft(v)))
        np.testing.assert_allclose(circular_convolve(u, v), ref, atol=1e-10)

    def test_commutative(self):
        rng = np.random.default_rng(2)
        u, v = rng.standard_normal(9), rng.standard_normal(9)
        np.testing.assert_allclose(circular_convolve(u, v), circular_convolve(v, u))

    def test_rejects_mismatch(self):
        with pytest.raises(ShapeError):
            circular_convolve(np.ones(3), np.ones(4))


class TestSketchParams:
    def test_from_seed_deterministic(self):
        p1 = SketchParams.from_seed(8, 16, seed=5)
        p2 = SketchParams.from_seed(8, 16, seed=5)
        np.testing.assert_array_equal(p1.h1, p2.h1)
        np.testing.assert_array_equal(p1.s2, p2.s2)
        assert p1.num_features == 8

    def test_tables_in_range(self):
        p = SketchParams.from_seed(32, 7, seed=11)
        assert p.h1.min() >= 0 and p.h1.max() < 7
        assert set(np.unique(p.s1)) <= {-1, 1}

    def test_rejects_bad_tables(self):
        with pytest.raises(ShapeError):
            SketchParams(d=4, h1=np.array([0, 9]), h2=np.array([0, 1]),
                         s1=np.array([1, -1]), s2=np.array([1, 1]), seed=0)
        with pytest.raises(ValueError):
            SketchParams(d=4, h1=np.array([0, 1]), h2=np.array([0, 1]),
                         s1=np.array([1, 2]), s2=np.array([1, 1]), seed=0)
        with pytest.raises(ShapeError):
            SketchParams(d=4, h1=np.array([0, 1, 2]), h2=np.array([0, 1]),
                         s1=np.array([1, 1]), s2=np.array([1, 1]), seed=0)


class TestTensorSketch:
    def test_is_conv_of_count_sketches(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(10)
        p = SketchParams.from_seed(10, 16, seed=4)
        expected = circular_convolve(count_sketch(x, p.h1, p.s1, p.d),
                                     count_sketch(x, p.h2, p.s2, p.d))
        np.testing.assert_allclose(tensor_sketch(x, p), expected)

    def test_unbiased_inner_product(self):
        # E[<TS(x), TS(y)>] = <x, y>^2 over sketch seeds
        rng = np.random.default_rng(42)
        x, y = rng.standard_normal(8), rng.standard_normal(8)
        target = float(np.dot(x, y)) ** 2
        trials = 3000
        vals = np.empty(trials)
        for seed in range(trials):
            p = SketchParams.from_seed(8, 32, seed)
            vals[seed] = float(np.dot(tensor_sketch(x, p), tensor_sketch(y, p)))
        se = vals.std(ddof=1) / np.sqrt(trials)
        assert abs(vals.mean() - target) <= 4 * se


class TestCbpPool:
    def test_sum_of_row_sketches(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((4, 6))
        p = SketchParams.from_seed(6, 12, seed=9)
        expected = sum(tensor_sketch(row, p) for row in X)
        np.testing.assert_allclose(cbp_pool(X, p), expected)

    def test_normalize_unit_norm(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((3, 5))
        p = SketchParams.from_seed(5, 8, seed=2)
        out = cbp_pool(X, p, normalize=True)
        assert np.linalg.norm(out) == pytest.approx(1.0, rel=1e-12)

    def test_rejects_feature_mismatch(self):
        p = SketchParams.from_seed(5, 8, seed=2)
        with pytest.raises(ShapeError):
            cbp_pool(np.zeros((3, 4)), p)


def test_gradient_flows_through_sketch():
    # the autograd circular_conv op matches the sketch module's convolution
    rng = np.random.default_rng(7)
    u, v = rng.standard_normal(6), rng.standard_normal(6)
    tape = Tape()
    nu, nv = tape.leaf(u), tape.leaf(v)
    np.testing.assert_allclose(tape.circular_conv(nu, nv).value,
                               circular_convolve(u, v), atol=1e-12)

    target = rng.standard_normal(6)

    def f(params):
        uu, vv = params
        t = Tape()
        a, b = t.leaf(uu), t.leaf(vv)
        diff = t.subtract(t.circular_conv(a, b), t.leaf(target))
        loss = t.sum_squares(diff)
        t.backward(loss)
        return float(loss.value), [a.grad, b.grad]

    assert finite_diff_check(f, [u, v]) <= 1e-6
