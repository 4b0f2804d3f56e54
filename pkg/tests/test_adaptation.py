import numpy as np
import pytest

import oracles
from conftest import two_blobs
from oodkit import (
    Adam,
    AdaptConfig,
    CheckpointSet,
    ClusterHead,
    average_checkpoints,
    cosine_lr,
    cross_entropy_grad,
    cross_entropy_loss,
    extract_features,
    finetune_head,
    init_head,
    load_head,
    save_head,
)


def _uniform_head(d, K):
    """Zero second layer -> exactly uniform probabilities for any input."""
    rng = np.random.default_rng(0)
    return ClusterHead(
        W1=rng.standard_normal((d, 16)),
        b1=rng.standard_normal(16),
        W2=np.zeros((16, K)),
        b2=np.zeros(K),
    )


class TestForward:
    def test_probability_rows(self):
        head = init_head(5, 8, 3, seed=0)
        p = head.forward(np.random.default_rng(1).standard_normal((20, 5)))
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)

    def test_softmax_shift_invariance(self):
        head = init_head(4, 6, 5, seed=1)
        x = np.random.default_rng(2).standard_normal((10, 4))
        p = head.forward(x)
        shifted = ClusterHead(head.W1, head.b1, head.W2, head.b2 + 123.0)
        p2 = shifted.forward(x)
        np.testing.assert_allclose(p2, p, atol=1e-9)
        np.testing.assert_array_equal(p2.argmax(axis=1), p.argmax(axis=1))


class TestCrossEntropy:
    def test_uniform_head_gives_log_k(self):
        head = _uniform_head(d=7, K=10)
        x = np.random.default_rng(3).standard_normal((12, 7))
        y = np.random.default_rng(4).integers(0, 10, 12)
        assert abs(cross_entropy_loss(head, x, y) - np.log(10)) < 1e-12

    def test_confident_head_near_zero_loss(self):
        # one-hot inputs through a saturated identity-ish head: margin >= 20
        K = 10
        head = ClusterHead(W1=100.0 * np.eye(K), b1=np.zeros(K),
                           W2=25.0 * np.eye(K), b2=np.zeros(K))
        y = np.arange(K)
        x = np.eye(K)
        assert cross_entropy_loss(head, x, y) <= 1e-6

    def test_matches_naive_softmax_log_oracle(self):
        head = init_head(8, 16, 4, seed=5)
        x = np.random.default_rng(6).standard_normal((32, 8))
        y = np.random.default_rng(7).integers(0, 4, 32)
        expected = oracles.softmax_then_log_ce(head.logits(x), y)
        assert abs(cross_entropy_loss(head, x, y) - expected) < 1e-10

    def test_label_out_of_range(self):
        head = init_head(3, 4, 2, seed=0)
        with pytest.raises(ValueError, match="label out of range"):
            cross_entropy_loss(head, np.zeros((2, 3)), [0, 2])

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(8)
        for seed in range(5):
            head = init_head(6, 9, 3, seed=seed)
            x = rng.standard_normal((15, 6))
            y = rng.integers(0, 3, 15)
            assert cross_entropy_loss(head, x, y) >= 0.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((20, 5))
        y = rng.integers(0, 3, 20)
        for seed in range(3):
            head = init_head(5, 6, 3, seed=seed)
            _, grads = cross_entropy_grad(head, x, y)
            fd = oracles.finite_difference_grads(
                lambda h: cross_entropy_loss(h, x, y), head)
            assert oracles.relative_grad_error(grads, fd) <= 1e-4


class TestAdam:
    def test_single_step_hand_value(self):
        # f(w) = w^2/2 from w=1: g=1, bias-corrected first step is
        # lr * 1/(sqrt(1) + eps)
        w = np.array([1.0])
        opt = Adam([w])
        lr = 0.05
        opt.step([np.array([1.0])], lr)
        expected = 1.0 - lr * 1.0 / (np.sqrt(1.0) + 1e-8)
        assert abs(w[0] - expected) < 1e-15

    def test_zero_lr_is_identity(self):
        w = np.array([2.0, -3.0])
        opt = Adam([w])
        opt.step([np.array([1.0, 4.0])], 0.0)
        np.testing.assert_array_equal(w, [2.0, -3.0])


class TestCosineSchedule:
    def test_endpoints(self):
        assert cosine_lr(0, 10, 1e-3, 1e-4) == pytest.approx(1e-3)
        assert cosine_lr(9, 10, 1e-3, 1e-4) == pytest.approx(1e-4)

    def test_monotone_decreasing(self):
        lrs = [cosine_lr(t, 20, 1e-3, 1e-5) for t in range(20)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))

    def test_single_step_uses_start(self):
        assert cosine_lr(0, 1, 5e-4, 1e-6) == 5e-4


class TestFinetune:
    def test_zero_lr_keeps_init_exactly(self):
        x, y = two_blobs(seed=0, n_per=20, d=6)
        init = init_head(6, 8, 2, seed=0)
        cfg = AdaptConfig(epochs=3, lr_start=0.0, lr_end=0.0, batch_size=16, seed=0)
        cs = finetune_head(init, x, y, cfg)
        assert len(cs.checkpoints) == 3
        for ckpt in cs.checkpoints:
            for a, b in zip(ckpt.params(), init.params()):
                np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("seed", range(5))
    def test_loss_decreases_on_blobs(self, seed):
        x, y = two_blobs(seed=seed, n_per=60, d=8)
        init = init_head(8, 32, 2, seed=seed)
        cfg = AdaptConfig(epochs=5, batch_size=32, seed=seed)
        cs = finetune_head(init, x, y, cfg)
        assert cs.loss_trace[-1] < cs.loss_trace[0]

    def test_bitwise_deterministic(self):
        x, y = two_blobs(seed=1, n_per=30, d=6)
        init = init_head(6, 8, 2, seed=3)
        cfg = AdaptConfig(epochs=2, batch_size=16, seed=11)
        a = finetune_head(init, x, y, cfg)
        b = finetune_head(init, x, y, cfg)
        for ca, cb in zip(a.checkpoints, b.checkpoints):
            for pa, pb in zip(ca.params(), cb.params()):
                np.testing.assert_array_equal(pa, pb)
        assert a.loss_trace == b.loss_trace

    def test_full_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((25, 4))
        y = rng.integers(0, 3, 25)
        head = init_head(4, 5, 3, seed=1)
        _, grads = cross_entropy_grad(head, x, y)
        fd = oracles.finite_difference_grads(lambda h: cross_entropy_loss(h, x, y), head)
        assert oracles.relative_grad_error(grads, fd) <= 1e-4

    def test_dimension_mismatch(self):
        init = init_head(6, 8, 2, seed=0)
        with pytest.raises(ValueError, match="input dim"):
            finetune_head(init, np.zeros((4, 5)), [0, 1, 0, 1], AdaptConfig(epochs=1))


class TestAverageCheckpoints:
    def test_identical_checkpoints(self):
        head = init_head(4, 6, 3, seed=2)
        cs = CheckpointSet(checkpoints=[head.copy() for _ in range(4)])
        avg = average_checkpoints(cs)
        for a, b in zip(avg.params(), head.params()):
            np.testing.assert_array_equal(a, b)

    def test_zeros_and_twos(self):
        z = ClusterHead(np.zeros((3, 4)), np.zeros(4), np.zeros((4, 2)), np.zeros(2))
        t = ClusterHead(2 * np.ones((3, 4)), 2 * np.ones(4),
                        2 * np.ones((4, 2)), 2 * np.ones(2))
        avg = average_checkpoints(CheckpointSet(checkpoints=[z, t]))
        np.testing.assert_array_equal(avg.W1, np.ones((3, 4)))
        np.testing.assert_array_equal(avg.b2, np.ones(2))

    def test_five_random_checkpoints_match_mean_oracle(self):
        heads = [init_head(5, 7, 3, seed=s) for s in range(5)]
        avg = average_checkpoints(CheckpointSet(checkpoints=heads))
        for idx in range(4):
            stacked = np.stack([h.params()[idx] for h in heads])
            np.testing.assert_allclose(avg.params()[idx], stacked.mean(axis=0), atol=1e-7)

    def test_singleton_is_identity(self):
        head = init_head(3, 4, 2, seed=9)
        avg = average_checkpoints(CheckpointSet(checkpoints=[head]))
        for a, b in zip(avg.params(), head.params()):
            np.testing.assert_array_equal(a, b)

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            average_checkpoints(CheckpointSet())

    def test_mismatched_dims_rejected(self):
        a = init_head(3, 4, 2, seed=0)
        b = init_head(3, 5, 2, seed=0)
        with pytest.raises(ValueError, match="mismatched layer dims"):
            CheckpointSet(checkpoints=[a, b])


class TestExtractFeatures:
    def test_identity_like_head_in_linear_region(self):
        d = 6
        eps = 1e-4
        head = ClusterHead(eps * np.eye(d), np.zeros(d), np.zeros((d, 2)), np.zeros(2))
        x = np.random.default_rng(11).standard_normal((20, d))
        from oodkit import l2_normalize

        feats = extract_features(head, x)
        np.testing.assert_allclose(feats, l2_normalize(x), atol=1e-6)

    def test_rows_unit_norm(self):
        head = init_head(8, 16, 3, seed=4)
        x = np.random.default_rng(12).standard_normal((30, 8))
        feats = extract_features(head, x)
        norms = np.linalg.norm(feats.astype(np.float64), axis=1)
        assert np.all(np.abs(norms - 1.0) <= 1e-6)

    def test_equal_inputs_equal_outputs(self):
        head = init_head(5, 9, 2, seed=6)
        x = np.random.default_rng(13).standard_normal((4, 5))
        x[2] = x[0]
        feats = extract_features(head, x)
        np.testing.assert_array_equal(feats[2], feats[0])

    def test_zero_hidden_vector_names_row(self):
        head = ClusterHead(np.ones((3, 4)), np.zeros(4), np.zeros((4, 2)), np.zeros(2))
        x = np.array([[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]])
        with pytest.raises(ValueError, match="row 1"):
            extract_features(head, x)


class TestCheckpointFiles:
    def test_roundtrip_float32_exact(self, tmp_path):
        head = init_head(7, 5, 3, seed=8)
        path = tmp_path / "head.ckpt"
        save_head(head, path)
        loaded = load_head(path)
        assert loaded.layer_dims == head.layer_dims
        for a, b in zip(loaded.params(), head.params()):
            np.testing.assert_array_equal(a, b.astype(np.float32).astype(np.float64))

    def test_corruption_detected(self, tmp_path):
        head = init_head(3, 4, 2, seed=0)
        path = tmp_path / "head.ckpt"
        save_head(head, path)
        raw = bytearray(path.read_bytes())
        raw[-40] ^= 0x01
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="checksum mismatch"):
            load_head(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "head.ckpt"
        path.write_bytes(b"garbagegarbage")
        with pytest.raises(ValueError, match="bad magic"):
            load_head(path)
