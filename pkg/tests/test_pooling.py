import time

import numpy as np
import pytest

from attnpool.pooling import (AttentionParams, PerClassParams, attention_maps,
                              combined_map_score, extract_maps,
                              init_attention_params, rank1_parts,
                              score_avg_pool, score_multiclass, score_per_class,
                              score_rank1, score_rank_p, score_second_order,
                              score_top_down_only, uniform_init)
from attnpool.tensors import ShapeError


def random_instances(count, seed=123, max_dim=16):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(1, max_dim + 1))
        f = int(rng.integers(1, max_dim + 1))
        yield rng.standard_normal((n, f)), rng.standard_normal(f), rng.standard_normal(f)


class TestRank1Equivalence:
    def test_hand_example(self):
        X = np.eye(2)
        a = np.array([1.0, 2.0])
        b = np.array([3.0, 4.0])
        # X^T X = I so the score is just a . b = 11
        assert score_rank1(X, a, b) == 11.0
        assert score_second_order(X, np.outer(a, b)) == pytest.approx(11.0)

    def test_equivalence_over_1000_instances(self):
        t0 = time.perf_counter()
        for X, a, b in random_instances(1000):
            cheap = score_rank1(X, a, b)
            oracle = score_second_order(X, np.outer(a, b))
            assert abs(cheap - oracle) <= 1e-9 * (1.0 + abs(cheap))
        assert time.perf_counter() - t0 < 5.0

    def test_symmetric_form_identity(self):
        for X, a, b in random_instances(1000, seed=7):
            s = score_rank1(X, a, b)
            both = float((X @ a) @ (X @ b))
            scale = 1.0 + abs(both)
            assert abs(s - both) / scale <= 1e-12
            assert abs(s - score_rank1(X, b, a)) / scale <= 1e-12

    def test_combined_map_identity(self):
        for X, a, b in random_instances(300, seed=9):
            params = AttentionParams.rank1(a.reshape(-1, 1), b)
            direct = score_multiclass(X, params)
            _, via_map = combined_map_score(X, params)
            np.testing.assert_allclose(via_map, direct, rtol=1e-12, atol=1e-12)

    def test_rank1_parts(self):
        X = np.array([[1.0, 0.0], [2.0, 1.0]])
        b = np.array([1.0, 1.0])
        a = np.array([1.0, 0.0])
        h, pooled, s = rank1_parts(X, a, b)
        np.testing.assert_array_equal(h, [1.0, 3.0])
        np.testing.assert_array_equal(pooled, [7.0, 3.0])
        assert s == 7.0


class TestRankP:
    @pytest.mark.parametrize("P", [1, 2, 5])
    def test_rank_p_equals_explicit_second_order(self, P):
        rng = np.random.default_rng(40 + P)
        for _ in range(50):
            n = int(rng.integers(1, 10))
            f = int(rng.integers(1, 10))
            K = int(rng.integers(1, 5))
            X = rng.standard_normal((n, f))
            A_p = tuple(rng.standard_normal((f, K)) for _ in range(P))
            b_p = tuple(rng.standard_normal(f) for _ in range(P))
            s = score_rank_p(X, AttentionParams(A_p, b_p))
            for k in range(K):
                W = sum(np.outer(A[:, k], b) for A, b in zip(A_p, b_p))
                oracle = score_second_order(X, W)
                assert abs(s[k] - oracle) <= 1e-9 * (1.0 + abs(oracle))

    def test_rank1_special_case_matches_multiclass(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((5, 4))
        params = AttentionParams.rank1(rng.standard_normal((4, 3)), rng.standard_normal(4))
        np.testing.assert_allclose(score_rank_p(X, params), score_multiclass(X, params),
                                   rtol=1e-12, atol=1e-12)


class TestOtherHeads:
    def test_avg_pool_hand(self):
        X = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert score_avg_pool(X, np.array([1.0, 1.0])) == 10.0

    def test_top_down_only_matches_avg_pool_columns(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((6, 5))
        W = rng.standard_normal((5, 3))
        s = score_top_down_only(X, W)
        for k in range(3):
            assert s[k] == pytest.approx(score_avg_pool(X, W[:, k]), rel=1e-12)

    def test_per_class_hand(self):
        X = np.eye(2)
        A = np.array([[1.0, 0.0], [0.0, 2.0]])
        B = np.array([[3.0, 0.0], [0.0, 4.0]])
        # X^T X = I: s[k] = A[:,k] . B[:,k]
        np.testing.assert_allclose(score_per_class(X, PerClassParams(A, B)), [3.0, 8.0])

    def test_per_class_matches_second_order_per_class(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((4, 6))
        A = rng.standard_normal((6, 3))
        B = rng.standard_normal((6, 3))
        s = score_per_class(X, PerClassParams(A, B))
        for k in range(3):
            oracle = score_second_order(X, np.outer(A[:, k], B[:, k]))
            assert s[k] == pytest.approx(oracle, rel=1e-10, abs=1e-10)


class TestMapsAndShapes:
    def test_attention_maps_structure(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((6, 4))
        params = AttentionParams.rank1(rng.standard_normal((4, 3)), rng.standard_normal(4))
        maps = attention_maps(X, params)
        np.testing.assert_allclose(maps.c, maps.t * maps.h[:, None])
        np.testing.assert_allclose(maps.c.sum(axis=0), score_multiclass(X, params),
                                   rtol=1e-12)

    def test_extract_maps_row_major(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((6, 4))
        params = AttentionParams.rank1(rng.standard_normal((4, 2)), rng.standard_normal(4))
        grids = extract_maps(X, params, 2, 3)
        flat = attention_maps(X, params)
        # loc = row*n2 + col
        assert grids.h[1, 2] == flat.h[1 * 3 + 2]
        assert grids.c.shape == (2, 3, 2)

    def test_extract_maps_rejects_bad_grid(self):
        X = np.zeros((6, 4))
        params = AttentionParams.rank1(np.zeros((4, 2)), np.zeros(4))
        with pytest.raises(ShapeError):
            extract_maps(X, params, 2, 4)

    def test_multiclass_requires_rank1(self):
        params = AttentionParams((np.zeros((3, 2)),) * 2, (np.zeros(3),) * 2)
        with pytest.raises(ShapeError):
            score_multiclass(np.zeros((2, 3)), params)

    def test_second_order_requires_square_w(self):
        with pytest.raises(ShapeError):
            score_second_order(np.zeros((2, 3)), np.zeros((3, 2)))

    def test_params_validation(self):
        with pytest.raises(ShapeError):
            AttentionParams((np.zeros((3, 2)),), (np.zeros(3), np.zeros(3)))
        with pytest.raises(ShapeError):
            AttentionParams((np.zeros((3, 2)), np.zeros((4, 2))), (np.zeros(3), np.zeros(4)))
        with pytest.raises(ShapeError):
            PerClassParams(np.zeros((3, 2)), np.zeros((3, 3)))

    def test_feature_dim_mismatch(self):
        params = AttentionParams.rank1(np.zeros((4, 2)), np.zeros(4))
        with pytest.raises(ShapeError):
            score_multiclass(np.zeros((2, 3)), params)
        with pytest.raises(ShapeError):
            score_rank1(np.zeros((2, 3)), np.zeros(4), np.zeros(4))


class TestInit:
    def test_seeded_init_deterministic(self):
        p1 = init_attention_params(5, 3, 2, seed=9)
        p2 = init_attention_params(5, 3, 2, seed=9)
        for A1, A2 in zip(p1.A_p, p2.A_p):
            np.testing.assert_array_equal(A1, A2)
        for b1, b2 in zip(p1.b_p, p2.b_p):
            np.testing.assert_array_equal(b1, b2)

    def test_init_scale_bound(self):
        p = init_attention_params(16, 4, 3, seed=1)
        bound = 1.0 / 4.0
        for A in p.A_p:
            assert np.abs(A).max() <= bound
        assert p.rank == 3 and p.num_features == 16 and p.num_classes == 4

    def test_uniform_init_shape_and_bound(self):
        arr = uniform_init((3, 4), 7, 0.5)
        assert arr.shape == (3, 4)
        assert np.abs(arr).max() <= 0.5
        np.testing.assert_array_equal(arr, uniform_init((3, 4), 7, 0.5))
