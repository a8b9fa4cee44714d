import numpy as np
import pytest

from attnpool.pooling import AttentionParams, score_multiclass, score_top_down_only
from attnpool.pose import (ATTENTION_CHANNEL, NUM_HEAD_CHANNELS,
                           NUM_POSE_CHANNELS, PoseHeadParams, PoseTarget,
                           pose_head_forward, pose_loss,
                           score_pose_regularized, total_loss)
from attnpool.tensors import ShapeError


def _linear_params(b):
    """Pose head rigged so the attention channel computes exactly h = X b.

    relu(Xb) - relu(-Xb) = Xb, via W1 = [b, -b] and opposite-sign output
    weights on channel 16.
    """
    f = len(b)
    W1 = np.column_stack([b, -b])
    W2 = np.zeros((2, NUM_HEAD_CHANNELS))
    W2[0, ATTENTION_CHANNEL] = 1.0
    W2[1, ATTENTION_CHANNEL] = -1.0
    return PoseHeadParams(W1=W1, bias1=np.zeros(2), W2=W2,
                          bias2=np.zeros(NUM_HEAD_CHANNELS))


class TestForward:
    def test_rigged_head_reduces_to_linear_attention(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((6, 4))
        b = rng.standard_normal(4)
        A = rng.standard_normal((4, 3))
        scores, h, out = score_pose_regularized(X, _linear_params(b), A)
        np.testing.assert_allclose(h, X @ b, atol=1e-9)
        ref = score_multiclass(X, AttentionParams.rank1(A, b))
        np.testing.assert_allclose(scores, ref, atol=1e-9)
        assert out.shape == (6, NUM_HEAD_CHANNELS)

    def test_constant_attention_reduces_to_avg_pool(self):
        # W1 = 0, bias1 = 1, attention channel sums the hidden units / hdim:
        # h is identically 1, so scores become plain spatial sums.
        rng = np.random.default_rng(1)
        X = rng.standard_normal((5, 3))
        A = rng.standard_normal((3, 2))
        hdim = 4
        W2 = np.zeros((hdim, NUM_HEAD_CHANNELS))
        W2[:, ATTENTION_CHANNEL] = 1.0 / hdim
        params = PoseHeadParams(W1=np.zeros((3, hdim)), bias1=np.ones(hdim),
                                W2=W2, bias2=np.zeros(NUM_HEAD_CHANNELS))
        scores, h, _ = score_pose_regularized(X, params, A)
        np.testing.assert_allclose(h, np.ones(5))
        np.testing.assert_allclose(scores, score_top_down_only(X, A), atol=1e-12)

    def test_forward_shape_error(self):
        params = PoseHeadParams.init(f=4, hdim=3, seed=0)
        with pytest.raises(ShapeError):
            pose_head_forward(np.zeros((2, 5)), params)


class TestPoseLoss:
    def test_hand_example(self):
        # n=2, one visible channel, unit error at one location: 1 / (2*1)
        n = 2
        hm = np.zeros((n, NUM_POSE_CHANNELS))
        hm[0, 0] = 1.0
        mask = np.zeros(NUM_POSE_CHANNELS)
        mask[0] = 1.0
        target = PoseTarget(hm, mask)
        pred = np.zeros((n, NUM_HEAD_CHANNELS))
        assert pose_loss(pred, target) == pytest.approx(0.5)

    def test_masked_channels_ignored(self):
        n = 3
        hm = np.zeros((n, NUM_POSE_CHANNELS))
        mask = np.zeros(NUM_POSE_CHANNELS)
        mask[2] = 1.0
        target = PoseTarget(hm, mask)
        pred = np.zeros((n, NUM_HEAD_CHANNELS))
        pred[:, 5] = 100.0  # masked channel, must not contribute
        assert pose_loss(pred, target) == 0.0

    def test_attention_channel_never_enters(self):
        n = 2
        target = PoseTarget(np.zeros((n, NUM_POSE_CHANNELS)),
                            np.ones(NUM_POSE_CHANNELS))
        pred = np.zeros((n, NUM_HEAD_CHANNELS))
        pred[:, ATTENTION_CHANNEL] = 1e6
        assert pose_loss(pred, target) == 0.0

    def test_all_masked_warns_and_returns_zero(self):
        target = PoseTarget(np.zeros((2, NUM_POSE_CHANNELS)),
                            np.zeros(NUM_POSE_CHANNELS))
        with pytest.warns(UserWarning):
            assert pose_loss(np.ones((2, NUM_HEAD_CHANNELS)), target) == 0.0

    def test_pred_shape_error(self):
        target = PoseTarget(np.zeros((2, NUM_POSE_CHANNELS)),
                            np.ones(NUM_POSE_CHANNELS))
        with pytest.raises(ShapeError):
            pose_loss(np.zeros((3, NUM_HEAD_CHANNELS)), target)


class TestValidation:
    def test_target_range_checks(self):
        with pytest.raises(ValueError):
            PoseTarget(np.full((2, NUM_POSE_CHANNELS), 1.5), np.ones(NUM_POSE_CHANNELS))
        with pytest.raises(ValueError):
            PoseTarget(np.zeros((2, NUM_POSE_CHANNELS)),
                       np.full(NUM_POSE_CHANNELS, 0.5))
        with pytest.raises(ShapeError):
            PoseTarget(np.zeros((2, 5)), np.ones(NUM_POSE_CHANNELS))

    def test_param_shape_checks(self):
        with pytest.raises(ShapeError):
            PoseHeadParams(W1=np.zeros((4, 3)), bias1=np.zeros(2),
                           W2=np.zeros((3, NUM_HEAD_CHANNELS)),
                           bias2=np.zeros(NUM_HEAD_CHANNELS))
        with pytest.raises(ValueError):
            PoseHeadParams(W1=np.zeros((4, 3)), bias1=np.zeros(3),
                           W2=np.zeros((3, NUM_HEAD_CHANNELS)),
                           bias2=np.zeros(NUM_HEAD_CHANNELS), lambda_pose=-1.0)

    def test_init_deterministic_zero_biases(self):
        p1 = PoseHeadParams.init(f=6, hdim=5, seed=3)
        p2 = PoseHeadParams.init(f=6, hdim=5, seed=3)
        np.testing.assert_array_equal(p1.W1, p2.W1)
        np.testing.assert_array_equal(p1.W2, p2.W2)
        np.testing.assert_array_equal(p1.bias1, np.zeros(5))
        np.testing.assert_array_equal(p1.bias2, np.zeros(NUM_HEAD_CHANNELS))
        assert p1.hdim == 5
        assert np.abs(p1.W1).max() <= 1.0 / np.sqrt(6)
        assert np.abs(p1.W2).max() <= 1.0 / np.sqrt(5)


def test_total_loss_composition():
    assert total_loss(1.5, 2.0, 0.1) == pytest.approx(1.7)
    assert total_loss(1.5, 2.0, 0.0) == 1.5  # lambda 0 fully decouples pose
