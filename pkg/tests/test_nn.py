"""Layer gradients vs central differences, optimizer behavior, checkpoints."""

from __future__ import annotations

import math

import numpy as np
import pytest

from argmine.nn import (
    Adam,
    BiLstm,
    CheckpointError,
    CnnMaxPool,
    Dropout,
    EmbeddingTable,
    Linear,
    LstmDirection,
    NonFiniteGradError,
    Parameter,
    SoftmaxCrossEntropy,
    clip_grad_norm,
    cross_entropy,
    load_checkpoint,
    load_state_dict,
    save_checkpoint,
    softmax,
    state_dict,
)
from gradcheck import assert_grad_close, numeric_grad


class TestSoftmaxAndCrossEntropy:
    def test_rows_sum_to_one(self):
        z = np.random.default_rng(0).standard_normal((5, 7))
        np.testing.assert_allclose(softmax(z).sum(axis=1), 1.0, atol=1e-12)

    def test_shift_invariant(self):
        z = np.array([[1.0, 2.0, 3.0]])
        np.testing.assert_allclose(softmax(z), softmax(z + 100.0), atol=1e-12)

    def test_no_overflow_on_large_logits(self):
        out = softmax(np.array([1000.0, 1000.0]))
        np.testing.assert_allclose(out, [0.5, 0.5], atol=1e-12)

    def test_uniform_two_way_is_ln2(self):
        assert cross_entropy(np.array([[0.5, 0.5]]), [0]) == pytest.approx(
            math.log(2.0), abs=1e-12)

    def test_mean_over_rows(self):
        probs = np.array([[1.0, 0.0], [0.5, 0.5]])
        got = cross_entropy(probs, [0, 1])
        assert got == pytest.approx(0.5 * math.log(2.0), abs=1e-12)

    def test_rejects_non_distribution(self):
        with pytest.raises(ValueError):
            cross_entropy(np.array([[0.7, 0.7]]), [0])

    def test_zero_target_prob_clamped(self, caplog):
        with caplog.at_level("WARNING"):
            got = cross_entropy(np.array([[1.0, 0.0]]), [1])
        assert got == pytest.approx(-math.log(1e-12))
        assert any("clamping" in r.message for r in caplog.records)


class TestLinear:
    def _setup(self, n=4, d_in=3, d_out=5, seed=0):
        rng = np.random.default_rng(seed)
        layer = Linear("lin", d_in, d_out, rng)
        x = rng.standard_normal((n, d_in))
        r = rng.standard_normal((n, d_out))
        return layer, x, r

    def test_input_gradient(self):
        layer, x, r = self._setup()
        num = numeric_grad(lambda: float(np.sum(layer.forward(x)[0] * r)), x)
        _, cache = layer.forward(x)
        dx = layer.backward(cache, r)
        assert_grad_close(dx, num, what="linear dx")

    def test_param_gradients(self):
        layer, x, r = self._setup()

        def loss():
            return float(np.sum(layer.forward(x)[0] * r))

        num_w = numeric_grad(loss, layer.w.value)
        num_b = numeric_grad(loss, layer.b.value)
        _, cache = layer.forward(x)
        layer.w.zero_grad(), layer.b.zero_grad()
        layer.backward(cache, r)
        assert_grad_close(layer.w.grad, num_w, what="linear dW")
        assert_grad_close(layer.b.grad, num_b, what="linear db")

    def test_one_dim_input(self):
        rng = np.random.default_rng(1)
        layer = Linear("lin", 3, 2, rng)
        x = rng.standard_normal(3)
        r = rng.standard_normal(2)
        num = numeric_grad(lambda: float(np.sum(layer.forward(x)[0] * r)), x)
        _, cache = layer.forward(x)
        dx = layer.backward(cache, r)
        assert dx.shape == (3,)
        assert_grad_close(dx, num, what="linear 1-d dx")

    def test_grads_accumulate(self):
        layer, x, r = self._setup()
        _, cache = layer.forward(x)
        for p in layer.params():
            p.zero_grad()
        layer.backward(cache, r)
        once = layer.w.grad.copy()
        layer.backward(cache, r)
        np.testing.assert_allclose(layer.w.grad, 2 * once, atol=1e-12)


class TestEmbeddingTable:
    def test_repeated_ids_accumulate(self):
        rng = np.random.default_rng(2)
        table = EmbeddingTable("emb", 5, 3, rng)
        ids = np.array([0, 2, 0])
        r = rng.standard_normal((3, 3))

        def loss():
            return float(np.sum(table.forward(ids)[0] * r))

        num = numeric_grad(loss, table.table.value)
        _, cache = table.forward(ids)
        table.table.zero_grad()
        table.backward(cache, r)
        assert_grad_close(table.table.grad, num, what="embedding table")
        # Row 0 was hit twice, rows 1/3/4 never.
        np.testing.assert_allclose(table.table.grad[0], r[0] + r[2], atol=1e-12)
        np.testing.assert_array_equal(table.table.grad[[1, 3, 4]], 0.0)


class TestDropout:
    def test_eval_is_identity(self):
        x = np.random.default_rng(0).standard_normal((3, 4))
        d = Dropout(0.5)
        out, cache = d.forward(x, train=False, rng=np.random.default_rng(1))
        assert cache is None
        np.testing.assert_array_equal(out, x)
        np.testing.assert_array_equal(d.backward(cache, x), x)

    def test_p_zero_is_identity_in_training(self):
        x = np.ones((2, 2))
        out, cache = Dropout(0.0).forward(x, train=True,
                                          rng=np.random.default_rng(0))
        assert cache is None
        np.testing.assert_array_equal(out, x)

    def test_survivors_scaled(self):
        x = np.ones((50, 50))
        d = Dropout(0.5)
        out, mask = d.forward(x, train=True, rng=np.random.default_rng(3))
        values = np.unique(out)
        assert set(values.tolist()) == {0.0, 2.0}
        # Backward routes through the identical mask.
        g = np.full_like(x, 0.5)
        np.testing.assert_array_equal(d.backward(mask, g), 0.5 * mask)

    def test_drop_rate_close_to_p(self):
        x = np.ones((200, 200))
        out, _ = Dropout(0.3).forward(x, train=True, rng=np.random.default_rng(4))
        assert abs((out == 0).mean() - 0.3) < 0.02

    def test_invalid_p(self):
        with pytest.raises(ValueError):
            Dropout(1.0)
        with pytest.raises(ValueError):
            Dropout(-0.1)


class TestLstmDirection:
    @pytest.mark.parametrize("reverse", [False, True])
    def test_all_gradients(self, reverse):
        rng = np.random.default_rng(5)
        layer = LstmDirection("lstm", 3, 2, rng, reverse=reverse)
        x = rng.standard_normal((4, 3))
        r = rng.standard_normal((4, 2))

        def loss():
            return float(np.sum(layer.forward(x)[0] * r))

        num_x = numeric_grad(loss, x)
        nums = {p.name: numeric_grad(loss, p.value) for p in layer.params()}
        _, cache = layer.forward(x)
        for p in layer.params():
            p.zero_grad()
        dx = layer.backward(cache, r)
        assert_grad_close(dx, num_x, what=f"lstm dx reverse={reverse}")
        for p in layer.params():
            assert_grad_close(p.grad, nums[p.name], what=p.name)

    def test_empty_sequence(self):
        layer = LstmDirection("lstm", 3, 2, np.random.default_rng(0))
        out, cache = layer.forward(np.zeros((0, 3)))
        assert out.shape == (0, 2)
        assert layer.backward(cache, np.zeros((0, 2))).shape == (0, 3)

    def test_reverse_flips_time(self):
        rng = np.random.default_rng(6)
        fwd = LstmDirection("a", 2, 3, rng, reverse=False)
        bwd = LstmDirection("b", 2, 3, np.random.default_rng(6), reverse=True)
        x = rng.standard_normal((5, 2))
        out_f, _ = fwd.forward(x[::-1])
        out_b, _ = bwd.forward(x)
        np.testing.assert_allclose(out_b, out_f[::-1], atol=1e-12)

    def test_forget_bias_initialized_to_one(self):
        layer = LstmDirection("lstm", 2, 3, np.random.default_rng(0))
        np.testing.assert_array_equal(layer.b.value[3:6], 1.0)
        np.testing.assert_array_equal(layer.b.value[:3], 0.0)
        np.testing.assert_array_equal(layer.b.value[6:], 0.0)


class TestBiLstm:
    def test_gradients_two_layers(self):
        rng = np.random.default_rng(7)
        net = BiLstm("bi", 3, 2, layers=2, rng=rng)
        x = rng.standard_normal((4, 3))
        r = rng.standard_normal((4, 4))

        def loss():
            return float(np.sum(net.forward(x)[0] * r))

        num_x = numeric_grad(loss, x)
        nums = {p.name: numeric_grad(loss, p.value) for p in net.params()}
        _, caches = net.forward(x)
        for p in net.params():
            p.zero_grad()
        dx = net.backward(caches, r)
        assert_grad_close(dx, num_x, what="bilstm dx")
        for p in net.params():
            assert_grad_close(p.grad, nums[p.name], what=p.name)

    def test_output_width(self):
        net = BiLstm("bi", 5, 4, layers=1, rng=np.random.default_rng(0))
        out, _ = net.forward(np.zeros((3, 5)))
        assert out.shape == (3, 8)
        assert net.d_out == 8

    def test_interlayer_dropout_only_in_training(self):
        rng = np.random.default_rng(8)
        net = BiLstm("bi", 3, 2, layers=2, rng=rng, dropout=0.5)
        x = np.random.default_rng(9).standard_normal((4, 3))
        a, _ = net.forward(x, train=False)
        b, _ = net.forward(x, train=False)
        np.testing.assert_array_equal(a, b)
        c, _ = net.forward(x, train=True, rng=np.random.default_rng(10))
        assert not np.array_equal(a, c)


class TestCnnMaxPool:
    def _setup(self, n, seed=11, ngrams=(2, 3), filters=4, d_in=3):
        rng = np.random.default_rng(seed)
        layer = CnnMaxPool("cnn", d_in, ngrams, filters, rng)
        x = rng.standard_normal((n, d_in))
        r = rng.standard_normal(layer.d_out)
        return layer, x, r

    @pytest.mark.parametrize("n", [1, 2, 6])
    def test_gradients(self, n):
        layer, x, r = self._setup(n)

        def loss():
            return float(np.sum(layer.forward(x)[0] * r))

        num_x = numeric_grad(loss, x)
        nums = {p.name: numeric_grad(loss, p.value) for p in layer.params()}
        _, cache = layer.forward(x)
        for p in layer.params():
            p.zero_grad()
        dx = layer.backward(cache, r)
        assert_grad_close(dx, num_x, what=f"cnn dx n={n}")
        for p in layer.params():
            assert_grad_close(p.grad, nums[p.name], what=f"{p.name} n={n}")

    def test_short_input_padded(self):
        layer, x, _ = self._setup(1)
        out, _ = layer.forward(x)
        assert out.shape == (layer.d_out,)
        assert np.isfinite(out).all()

    def test_output_is_max_over_windows(self):
        layer, x, _ = self._setup(6)
        out, _ = layer.forward(x)
        m, w, b = layer.ngram_sizes[0], layer.weights[0], layer.biases[0]
        t = x.shape[0] - m + 1
        acts = np.array([
            np.maximum(x[j:j + m].reshape(-1) @ w.value.T + b.value, 0.0)
            for j in range(t)
        ])
        np.testing.assert_allclose(out[:layer.filters], acts.max(axis=0),
                                   atol=1e-12)


class TestSoftmaxCrossEntropyLayer:
    def test_gradient(self):
        rng = np.random.default_rng(12)
        logits = rng.standard_normal((4, 5))
        targets = np.array([1, 0, 4, 2])
        layer = SoftmaxCrossEntropy()
        num = numeric_grad(lambda: layer.forward(logits, targets)[0], logits)
        _, cache = layer.forward(logits, targets)
        d = layer.backward(cache)
        assert_grad_close(d, num, what="softmax-ce")

    def test_one_dim_shape_preserved(self):
        layer = SoftmaxCrossEntropy()
        logits = np.array([0.3, -0.2, 0.1])
        _, cache = layer.forward(logits, 2)
        assert layer.backward(cache).shape == (3,)

    def test_uniform_loss(self):
        layer = SoftmaxCrossEntropy()
        loss, _ = layer.forward(np.zeros((1, 4)), [3])
        assert loss == pytest.approx(math.log(4.0), abs=1e-12)


class TestClip:
    def test_three_four_five(self):
        a = Parameter("a", np.zeros(1))
        b = Parameter("b", np.zeros(1))
        a.grad[:] = 3.0
        b.grad[:] = 4.0
        norm = clip_grad_norm([a, b], 2.5)
        assert norm == pytest.approx(5.0, abs=1e-12)
        assert a.grad[0] == pytest.approx(1.5, abs=1e-12)
        assert b.grad[0] == pytest.approx(2.0, abs=1e-12)

    def test_below_threshold_untouched(self):
        a = Parameter("a", np.zeros(2))
        a.grad[:] = [0.3, 0.4]
        norm = clip_grad_norm([a], 1.0)
        assert norm == pytest.approx(0.5, abs=1e-12)
        np.testing.assert_array_equal(a.grad, [0.3, 0.4])

    def test_invalid_max_norm(self):
        with pytest.raises(ValueError):
            clip_grad_norm([], 0.0)


class TestAdam:
    def test_first_step_is_lr_sized(self):
        p = Parameter("p", np.zeros(1))
        opt = Adam([p], lr=0.01)
        p.grad[:] = 2.0
        opt.step()
        assert p.value[0] == pytest.approx(-0.01, abs=1e-9)

    def test_quadratic_converges(self):
        target = np.array([3.0, -1.0, 0.5, 2.0])
        p = Parameter("p", np.zeros(4))
        opt = Adam([p], lr=0.1)
        for _ in range(500):
            opt.zero_grad()
            p.grad[:] = 2.0 * (p.value - target)
            opt.step()
        assert np.abs(p.value - target).max() < 1e-3

    def test_non_finite_rejected_without_update(self):
        p = Parameter("p", np.ones(2))
        opt = Adam([p], lr=0.1)
        p.grad[:] = [1.0, np.nan]
        with pytest.raises(NonFiniteGradError, match="p"):
            opt.step()
        np.testing.assert_array_equal(p.value, 1.0)
        assert opt.t == 0

    def test_deterministic_given_same_grads(self):
        def run():
            p = Parameter("p", np.array([1.0, 2.0]))
            opt = Adam([p], lr=0.05)
            for k in range(10):
                opt.zero_grad()
                p.grad[:] = [0.1 * k, -0.2]
                opt.step()
            return p.value.copy()

        np.testing.assert_array_equal(run(), run())


class TestStateAndCheckpoints:
    def _params(self):
        rng = np.random.default_rng(13)
        return [Parameter("m.w", rng.standard_normal((2, 3))),
                Parameter("m.b", rng.standard_normal(3))]

    def test_state_dict_round_trip(self):
        ps = self._params()
        state = state_dict(ps)
        qs = [Parameter("m.w", np.zeros((2, 3))), Parameter("m.b", np.zeros(3))]
        load_state_dict(qs, state)
        for p, q in zip(ps, qs):
            np.testing.assert_array_equal(p.value, q.value)

    def test_state_mismatch_errors(self):
        ps = self._params()
        with pytest.raises(ValueError, match="missing"):
            load_state_dict(ps, {"m.w": np.zeros((2, 3))})
        with pytest.raises(ValueError, match="shape"):
            load_state_dict(ps, {"m.w": np.zeros((3, 3)),
                                 "m.b": np.zeros(3)})

    def test_checkpoint_round_trip(self, tmp_path):
        ps = self._params()
        state = state_dict(ps)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, state)
        loaded = load_checkpoint(path)
        assert set(loaded) == {"m.w", "m.b"}
        for name, value in state.items():
            assert loaded[name].dtype == np.float64
            np.testing.assert_array_equal(loaded[name],
                                          value.astype(np.float32))

    def test_checkpoint_bytes_deterministic(self, tmp_path):
        state = state_dict(self._params())
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, state)
        save_checkpoint(p2, state)
        assert p1.read_bytes() == p2.read_bytes()

    def test_checkpoint_truncation(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, state_dict(self._params()))
        blob = path.read_bytes()
        path.write_bytes(blob[:-2])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_checkpoint_trailing_garbage(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, state_dict(self._params()))
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_checkpoint_bad_magic(self, tmp_path):
        path = tmp_path / "model.ckpt"
        path.write_bytes(b"WRONG!!!" + b"\x00" * 8)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
