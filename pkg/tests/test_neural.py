"""Recurrent cells, batched layers, losses, optimizer, training loop and
checkpoints — including the hand-computed oracles and gradient checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sensekit.errors import ConfigError, DataError, TrainingError
from sensekit.neural import (Adam, GruParams, LstmParams, RnnParams,
                             SequenceModel, TrainConfig, bigru_sequence,
                             gru_step, load_checkpoint, lstm_step, rnn_step,
                             run_sequence, save_checkpoint, sigmoid,
                             softmax, softmax_cross_entropy, train_model)
from sensekit.neural.layers import (BiGruLayer, Dense, GruLayer, LstmLayer,
                                    MeanPool, RnnLayer, mse_loss)

from gradcheck import finite_difference_check


def scalar_gru(w=1.0, u=1.0, b=0.0):
    one = np.full((1, 1), w)
    uu = np.full((1, 1), u)
    bb = np.full(1, b)
    return GruParams(w_z=one, u_z=uu, w_r=one, u_r=uu, w_h=one, u_h=uu,
                     b_z=bb.copy(), b_r=bb.copy(), b_h=bb.copy())


def naive_gru_step(p, x, h):
    """Literal transcription of the gate equations, kept independent of the
    library implementation."""
    z = 1 / (1 + np.exp(-(p.w_z @ x + p.u_z @ h + p.b_z)))
    r = 1 / (1 + np.exp(-(p.w_r @ x + p.u_r @ h + p.b_r)))
    hc = np.tanh(p.w_h @ x + p.u_h @ (r * h) + p.b_h)
    return (1 - z) * h + z * hc


class TestGruOracle:
    def test_hand_computed_scalar_case(self):
        # x=1, h_prev=0.5, unit weights, zero biases:
        #   z = r = sigmoid(1.5), hc = tanh(1 + r/2), h = (1-z)/2 + z*hc
        h = gru_step(scalar_gru(), np.array([1.0]), np.array([0.5]))
        assert h[0] == pytest.approx(0.8165945318562012, abs=1e-12)

    def test_matches_naive_on_100_random_cases(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            hd = int(rng.integers(1, 8))
            ind = int(rng.integers(1, 8))
            p = GruParams.init(ind, hd, rng)
            x = rng.standard_normal(ind)
            h = rng.standard_normal(hd)
            np.testing.assert_allclose(gru_step(p, x, h), naive_gru_step(p, x, h),
                                       atol=1e-12, rtol=0)

    def test_z_to_zero_keeps_previous_state(self):
        p = scalar_gru()
        p.b_z = np.array([-50.0])  # forces the update gate shut
        h_prev = np.array([0.37])
        assert gru_step(p, np.array([1.0]), h_prev)[0] == pytest.approx(0.37, abs=1e-12)

    def test_z_to_one_takes_candidate(self):
        p = scalar_gru()
        p.b_z = np.array([50.0])
        h = gru_step(p, np.array([1.0]), np.array([0.5]))
        r = sigmoid(1.5)
        assert h[0] == pytest.approx(np.tanh(1 + r * 0.5), abs=1e-12)

    @given(x=st.floats(-3, 3), h=st.floats(-0.99, 0.99))
    @settings(max_examples=50, deadline=None)
    def test_state_is_convex_combination(self, x, h):
        # h_t lies between h_prev and the candidate, elementwise
        p = scalar_gru()
        z = sigmoid(x + h)
        hc = np.tanh(x + sigmoid(x + h) * h)
        out = gru_step(p, np.array([x]), np.array([h]))[0]
        lo, hi = min(h, hc), max(h, hc)
        assert lo - 1e-12 <= out <= hi + 1e-12


class TestLstmOracle:
    def test_hand_computed_scalar_case(self):
        one = np.ones((1, 1))
        b = np.zeros(1)
        p = LstmParams(w_i=one, u_i=one, b_i=b, w_f=one, u_f=one, b_f=b.copy(),
                       w_o=one, u_o=one, b_o=b.copy(), w_g=one, u_g=one, b_g=b.copy())
        # i = f = o = sigmoid(1.5), g = tanh(1.5), c = f/4 + i*g, h = o*tanh(c)
        h, c = lstm_step(p, np.array([1.0]), np.array([0.5]), np.array([0.25]))
        assert c[0] == pytest.approx(0.9444197283997039, abs=1e-12)
        assert h[0] == pytest.approx(0.6027537567821848, abs=1e-12)


class TestRnnOracle:
    def test_tanh_step(self):
        p = RnnParams(w_hh=np.ones((1, 1)), w_xh=np.ones((1, 1)), b=np.zeros(1))
        h = rnn_step(p, np.array([1.0]), np.array([0.5]))
        assert h[0] == pytest.approx(np.tanh(1.5), abs=1e-12)

    def test_identity_activation(self):
        p = RnnParams(w_hh=np.ones((1, 1)), w_xh=np.ones((1, 1)), b=np.zeros(1),
                      activation="identity")
        assert rnn_step(p, np.array([1.0]), np.array([0.5]))[0] == pytest.approx(1.5)


class TestRunSequence:
    def test_matches_manual_iteration(self):
        rng = np.random.default_rng(0)
        p = GruParams.init(3, 4, rng)
        x = rng.standard_normal((6, 3))
        out = run_sequence("gru", p, x)
        h = np.zeros(4)
        for t in range(6):
            h = gru_step(p, x[t], h)
            np.testing.assert_allclose(out[t], h, atol=1e-15)

    def test_unknown_cell(self):
        with pytest.raises(ConfigError):
            run_sequence("cnn", scalar_gru(), np.zeros((3, 1)))


class TestBiGru:
    def test_decomposition_50_random_sequences(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            hd = int(rng.integers(1, 6))
            ind = int(rng.integers(1, 6))
            T = int(rng.integers(1, 9))
            fwd = GruParams.init(ind, hd, rng)
            bwd = GruParams.init(ind, hd, rng)
            x = rng.standard_normal((T, ind))
            out = bigru_sequence(fwd, bwd, x)
            expected = np.concatenate(
                [run_sequence("gru", fwd, x),
                 run_sequence("gru", bwd, x[::-1])[::-1]], axis=1)
            assert out.shape == (T, 2 * hd)
            np.testing.assert_allclose(out, expected, atol=1e-9, rtol=0)

    def test_rejects_mismatched_hidden(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ConfigError):
            bigru_sequence(GruParams.init(2, 3, rng), GruParams.init(2, 4, rng),
                           np.zeros((2, 2)))

    def test_layer_matches_reference_cells(self):
        rng = np.random.default_rng(3)
        layer = BiGruLayer(3, 4, np.random.default_rng(3))
        x = rng.standard_normal((2, 5, 3))
        out = layer.forward(x)
        fwd, bwd = layer.fwd.p, layer.bwd.p
        for b in range(2):
            np.testing.assert_allclose(out[b], bigru_sequence(fwd, bwd, x[b]),
                                       atol=1e-12)


class TestBatchedLayersMatchReference:
    @pytest.mark.parametrize("cell,layer_cls", [
        ("gru", GruLayer), ("rnn", RnnLayer), ("lstm", LstmLayer),
    ])
    def test_forward_equals_single_sequence(self, cell, layer_cls):
        rng = np.random.default_rng(11)
        layer = layer_cls(3, 5, np.random.default_rng(11))
        x = rng.standard_normal((4, 7, 3))
        out = layer.forward(x)
        for b in range(4):
            np.testing.assert_allclose(out[b], run_sequence(cell, layer.p, x[b]),
                                       atol=1e-12)


class TestLosses:
    def test_softmax_normalizes(self):
        p = softmax(np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)

    @given(arrays(np.float64, (3,), elements=st.floats(-20, 20)),
           st.floats(-5, 5))
    @settings(max_examples=50, deadline=None)
    def test_softmax_shift_invariant(self, logits, shift):
        np.testing.assert_allclose(softmax(logits), softmax(logits + shift),
                                   atol=1e-9)

    def test_cross_entropy_hand_value(self):
        logits = np.array([[0.0, 0.0]])
        loss, grad = softmax_cross_entropy(logits, np.array([0]))
        assert loss == pytest.approx(np.log(2.0), abs=1e-12)
        np.testing.assert_allclose(grad, [[-0.5, 0.5]], atol=1e-12)

    def test_mse_hand_value(self):
        loss, grad = mse_loss(np.array([[1.0, 2.0]]), np.array([[0.0, 0.0]]))
        assert loss == pytest.approx(2.5)
        np.testing.assert_allclose(grad, [[1.0, 2.0]])


class TestAdam:
    def test_first_step_is_lr_sized_sign_step(self):
        p = {"w": np.array([1.0, -2.0])}
        opt = Adam(p, lr=0.1)
        opt.step({"w": np.array([0.3, -0.4])})
        # bias-corrected first step moves by ~lr against the gradient sign
        np.testing.assert_allclose(p["w"], [1.0 - 0.1, -2.0 + 0.1], atol=1e-6)


def tiny_model(cell="gru", heads=None, seed=0):
    heads = heads or {"cls": ("softmax", 3)}
    return SequenceModel(cell=cell, input_dim=4, hidden_dim=5, num_layers=1,
                         heads=heads, seed=seed)


class TestGradients:
    @pytest.mark.parametrize("cell", ["rnn", "lstm", "gru", "bigru"])
    @pytest.mark.parametrize("head", [("softmax", 3), ("linear", 2)])
    def test_analytic_matches_finite_difference(self, cell, head):
        rng = np.random.default_rng(5)
        model = tiny_model(cell, heads={"out": head})
        x = rng.standard_normal((3, 6, 4))
        if head[0] == "softmax":
            targets = {"out": rng.integers(0, 3, size=3)}
        else:
            targets = {"out": rng.standard_normal((3, 2))}
        err = finite_difference_check(model, x, targets, rng=rng)
        assert err < 1e-4

    def test_multihead_gradients(self):
        rng = np.random.default_rng(9)
        model = SequenceModel(cell="gru", input_dim=4, hidden_dim=5, num_layers=2,
                              heads={"a": ("softmax", 3), "c": ("linear", 2)}, seed=1)
        x = rng.standard_normal((3, 5, 4))
        targets = {"a": rng.integers(0, 3, size=3), "c": rng.standard_normal((3, 2))}
        err = finite_difference_check(model, x, targets,
                                      loss_weights={"a": 0.3, "c": 0.7}, rng=rng)
        assert err < 1e-4


class TestSequenceModel:
    def test_rejects_bad_config(self):
        with pytest.raises(ConfigError):
            tiny_model("transformer")
        with pytest.raises(ConfigError):
            SequenceModel(cell="gru", input_dim=4, hidden_dim=0, num_layers=1,
                          heads={"o": ("softmax", 2)})
        with pytest.raises(ConfigError):
            SequenceModel(cell="gru", input_dim=4, hidden_dim=2, num_layers=1, heads={})

    def test_forward_shapes(self):
        model = tiny_model(heads={"a": ("softmax", 3), "c": ("linear", 2)})
        outs = model.predict(np.zeros((6, 7, 4)))
        assert outs["a"].shape == (6, 3)
        assert outs["c"].shape == (6, 2)
        np.testing.assert_allclose(outs["a"].sum(axis=1), 1.0, atol=1e-12)

    def test_seeded_init_is_deterministic(self):
        a, b = tiny_model(seed=3), tiny_model(seed=3)
        for k, v in a.params().items():
            np.testing.assert_array_equal(v, b.params()[k])

    def test_missing_target_raises(self):
        model = tiny_model()
        with pytest.raises(DataError):
            model.train_batch(np.zeros((2, 3, 4)), {})


class TestTrainModel:
    def make_data(self, n=60):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((n, 6, 4))
        y = (x.mean(axis=(1, 2)) > 0).astype(np.int64)
        x[y == 1] += 0.5
        return x, y

    def test_loss_decreases_and_is_deterministic(self):
        x, y = self.make_data()
        cfg = TrainConfig(epochs=8, batch_size=16, learning_rate=1e-2, seed=4)
        h1 = train_model(tiny_model(heads={"cls": ("softmax", 2)}), x, {"cls": y},
                         x, {"cls": y}, cfg)
        h2 = train_model(tiny_model(heads={"cls": ("softmax", 2)}), x, {"cls": y},
                         x, {"cls": y}, cfg)
        assert h1[-1]["train_loss"] < h1[0]["train_loss"]
        assert h1 == h2

    def test_target_accuracy_stops_early(self):
        x, y = self.make_data()
        cfg = TrainConfig(epochs=50, batch_size=16, learning_rate=1e-2, seed=4,
                          target_accuracy=0.8)
        hist = train_model(tiny_model(heads={"cls": ("softmax", 2)}), x, {"cls": y},
                           x, {"cls": y}, cfg)
        assert len(hist) < 50
        assert hist[-1]["val_cls_accuracy"] >= 0.8

    def test_patience_stops_on_plateau(self):
        x, y = self.make_data()
        cfg = TrainConfig(epochs=60, batch_size=16, learning_rate=0.0, seed=4,
                          patience=2)
        hist = train_model(tiny_model(heads={"cls": ("softmax", 2)}), x, {"cls": y},
                           x, {"cls": y}, cfg)
        assert len(hist) <= 5

    def test_non_finite_loss_raises_training_error(self):
        x, y = self.make_data()
        x[0, 0, 0] = np.nan
        cfg = TrainConfig(epochs=3, batch_size=16, learning_rate=1e-2, seed=4)
        with pytest.raises(TrainingError):
            train_model(tiny_model(heads={"cls": ("softmax", 2)}), x, {"cls": y},
                        cfg=cfg)

    def test_empty_training_set(self):
        with pytest.raises(DataError):
            train_model(tiny_model(), np.zeros((0, 3, 4)), {"cls": np.zeros(0)})


class TestCheckpoint:
    def test_roundtrip_predictions_close(self, tmp_path):
        model = tiny_model(heads={"a": ("softmax", 3), "c": ("linear", 2)})
        x = np.random.default_rng(0).standard_normal((4, 6, 4))
        path = tmp_path / "m.nnck"
        save_checkpoint(path, model, meta={"note": "test"})
        loaded, meta = load_checkpoint(path)
        assert meta == {"note": "test"}
        assert loaded.spec == model.spec
        a, b = model.predict(x), loaded.predict(x)
        for k in a:
            # float32 storage bounds the roundtrip error
            np.testing.assert_allclose(a[k], b[k], atol=1e-5)

    def test_rejects_non_checkpoint(self, tmp_path):
        path = tmp_path / "bad.nnck"
        path.write_bytes(b"nope")
        with pytest.raises(DataError):
            load_checkpoint(path)
