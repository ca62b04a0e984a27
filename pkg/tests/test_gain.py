import numpy as np
import pytest

from fdlp_derev import autodiff as ad
from fdlp_derev.errors import ValidationError
from fdlp_derev.features import DEFAULT_OPERATOR
from fdlp_derev.gain import (
    AdamState,
    Example,
    GainConfig,
    adam_step,
    backward,
    clean_features,
    feature_chain,
    forward,
    gain_tape,
    init_model,
    joint_finetune,
    joint_forward,
    mse_loss,
    split_indices,
    train,
)
from fdlp_derev.verify import fd_gradient_check, small_instance

import oracles

SMALL = GainConfig(conv_layers=((3, 3, 3), (2, 5, 3)), seed=2)


def toy_corpus(n, rows=48, seed=0, zero_target=False):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        log_r = rng.normal(0, 1, (rows, 36))
        target = np.zeros((rows, 36)) if zero_target else -0.3 * (log_r - log_r.mean()) + 0.1
        clean = np.exp(log_r + target)
        out.append(Example(log_r, target, clean_features(clean)))
    return out


class TestModel:
    def test_default_size(self):
        m = init_model()
        assert m.num_params == (8 * 5 * 3 + 8) + (8 * 8 * 5 * 3 + 8) + (8 * 36 * 36 + 36) == 11500

    def test_even_kernel_rejected(self):
        with pytest.raises(ValidationError, match="odd"):
            GainConfig(conv_layers=((4, 4, 3),))

    def test_large_kernel_shapes(self):
        cfg = GainConfig(conv_layers=((32, 41, 5), (32, 41, 5), (64, 21, 3), (64, 21, 3)))
        m = init_model(cfg)
        assert m.params["conv2.weight"].shape == (64, 32, 21, 3)
        assert forward(m, np.zeros((12, 36))).shape == (12, 36)

    def test_zero_output_layer(self, rng):
        m = init_model(GainConfig(zero_output=True))
        np.testing.assert_array_equal(forward(m, rng.standard_normal((800, 36))), 0.0)

    def test_deterministic(self, rng):
        x = rng.standard_normal((800, 36))
        a = forward(init_model(GainConfig(seed=4)), x)
        b = forward(init_model(GainConfig(seed=4)), x)
        assert a.shape == (800, 36)
        np.testing.assert_array_equal(a, b)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            forward(init_model(), np.zeros((800, 35)))

    def test_conv_matches_loops(self, rng):
        x = rng.standard_normal((2, 9, 7))
        w = rng.standard_normal((3, 2, 5, 3))
        b = rng.standard_normal(3)
        y = ad.conv2d(ad.Tape(), ad.Var(x), ad.Var(w), ad.Var(b))
        np.testing.assert_allclose(y.value, oracles.conv2d_loops(x, w, b), atol=1e-9)


class TestLoss:
    def test_equal(self, rng):
        a = rng.standard_normal((800, 36))
        assert mse_loss(a, a) == 0.0

    def test_offset(self, rng):
        a = rng.standard_normal((800, 36))
        assert mse_loss(a + 1.0, a) == pytest.approx(1.0, abs=1e-12)

    def test_two_pass(self, rng):
        a, b = rng.standard_normal((2, 80, 36))
        assert mse_loss(a, b) == pytest.approx(oracles.mse_two_pass(a, b), abs=1e-12)
        tape = ad.Tape()
        assert float(ad.mse(tape, ad.Var(a), b).value) == pytest.approx(oracles.mse_two_pass(a, b), abs=1e-12)

    def test_mismatch(self):
        with pytest.raises(ValidationError):
            mse_loss(np.zeros((3, 3)), np.zeros((3, 2)))

    def test_valid_rows_mask(self, rng):
        a, b = rng.standard_normal((2, 10, 4))
        b2 = b.copy()
        b2[6:] += 100.0
        assert mse_loss(a, b2, valid_rows=6) == pytest.approx(mse_loss(a[:6], b[:6]), rel=1e-14)


class TestBackward:
    def test_zero_params_zero_input(self):
        m = init_model(SMALL)
        m.params = {k: np.zeros_like(v) for k, v in m.params.items()}
        grads = backward(gain_tape(m, np.zeros((16, 36)), np.ones((16, 36))))
        for k, g in grads.items():
            if k.startswith("conv"):
                np.testing.assert_array_equal(g, 0.0)
        assert np.any(grads["out.bias"] != 0)

    def test_finite_differences(self):
        model, x, t, f = small_instance(5, frames=16)
        worst, fails = fd_gradient_check(lambda m: gain_tape(m, x, t), model)
        assert fails == 0 and worst < 1e-4

    def test_scaled_loss(self, rng):
        m = init_model(SMALL)
        x, t = rng.standard_normal((2, 16, 36))
        base = backward(gain_tape(m, x, t))
        tape = gain_tape(m, x, t)
        inner = tape.loss
        tape.loss = tape.record(ad.Var(3.0 * inner.value), lambda g: inner.accumulate(3.0 * g))
        scaled = backward(tape)
        for k in base:
            np.testing.assert_allclose(scaled[k], 3.0 * base[k], rtol=1e-12, atol=1e-15)

    def test_consumed_twice(self, rng):
        tape = gain_tape(init_model(SMALL), rng.standard_normal((8, 36)), np.zeros((8, 36)))
        backward(tape)
        with pytest.raises(ValidationError, match="consumed"):
            backward(tape)

    def test_replay_bit_identical(self, rng):
        tape = gain_tape(init_model(SMALL), rng.standard_normal((8, 36)), rng.standard_normal((8, 36)))
        assert tape.replay() == float(tape.loss.value)


class TestAdam:
    def test_zero_gradient(self, rng):
        p = {"w": rng.standard_normal(5)}
        out = adam_step(AdamState(), p, {"w": np.zeros(5)})
        np.testing.assert_array_equal(out["w"], p["w"])

    def test_first_step_sign(self, rng):
        p = {"w": rng.standard_normal(50)}
        g = {"w": rng.standard_normal(50)}
        state = AdamState(lr=1e-3)
        out = adam_step(state, p, g)
        np.testing.assert_allclose(out["w"] - p["w"], -1e-3 * np.sign(g["w"]), atol=1e-6)
        assert state.step == 1

    def test_monotone_motion(self):
        p = {"w": np.zeros(3)}
        g = {"w": np.array([1.0, -2.0, 0.5])}
        state = AdamState()
        trail = [p["w"]]
        for _ in range(5):
            p = adam_step(state, p, g)
            trail.append(p["w"])
        d = np.diff(np.array(trail), axis=0)
        assert np.all(np.sign(d) == -np.sign(g["w"]))
        assert state.step == 5

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            adam_step(AdamState(), {"w": np.zeros(3)}, {"w": np.zeros(4)})


class TestTrain:
    def test_empty(self):
        with pytest.raises(ValidationError, match="empty corpus"):
            train(init_model(SMALL), [])

    def test_zero_target(self):
        corpus = toy_corpus(8, rows=24, zero_target=True)
        model, rep = train(init_model(SMALL), corpus, epochs=30, batch=2, lr=1e-2)
        assert rep.val_loss[-1] < 1e-3 * rep.initial_val_loss

    def test_reduces_and_deterministic(self):
        corpus = toy_corpus(10, rows=24)
        m1, r1 = train(init_model(SMALL), corpus, epochs=4, batch=3, seed=7, lr=3e-3)
        m2, r2 = train(init_model(SMALL), corpus, epochs=4, batch=3, seed=7, lr=3e-3)
        assert r1.train_loss == r2.train_loss and r1.val_loss == r2.val_loss
        for k in m1.params:
            np.testing.assert_array_equal(m1.params[k], m2.params[k])
        assert r1.train_loss[-1] <= r1.initial_train_loss
        assert r1.epochs == 4 == len(r1.val_loss) == len(r1.seconds)

    def test_report_csv(self):
        _, rep = train(init_model(SMALL), toy_corpus(4, rows=16), epochs=2, batch=2)
        lines = rep.to_csv().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,seconds" and len(lines) == 4

    def test_split(self):
        tr, va = split_indices(50, 3)
        assert len(va) == 5 and sorted(tr + va) == list(range(50))
        assert split_indices(50, 3) == (tr, va)


class TestJoint:
    def test_oracle_gain_zero_loss(self, rng):
        log_r = rng.normal(0, 1, (64, 36))
        clean = np.exp(rng.normal(0, 1, (64, 36)))
        oracle = np.log(clean) - log_r
        feats = clean_features(clean)
        loss = feature_chain(ad.Tape(), ad.Var(oracle), log_r, feats)
        assert float(loss.value) <= 1e-10
        bumped = oracle + 1e-3 * rng.standard_normal(oracle.shape)
        assert float(feature_chain(ad.Tape(), ad.Var(bumped), log_r, feats).value) > float(loss.value)

    def test_joint_forward_shapes(self, rng):
        feats, loss, tape = joint_forward(init_model(SMALL), rng.normal(0, 1, (800, 36)), np.zeros((198, 36)))
        assert feats.shape == (198, 36) and loss > 0 and tape.loss is not None

    def test_joint_gradients(self):
        model, x, _, f = small_instance(9, frames=16)
        worst, fails = fd_gradient_check(lambda m: joint_forward(m, x, f)[2], model)
        assert fails == 0 and worst < 1e-4

    def test_zero_epochs_unchanged(self):
        m = init_model(SMALL)
        tuned, rep = joint_finetune(m, toy_corpus(4, rows=24), epochs=0)
        assert rep.epochs == 0
        for k in m.params:
            np.testing.assert_array_equal(tuned.params[k], m.params[k])

    def test_zero_lr(self):
        m = init_model(SMALL)
        tuned, rep = joint_finetune(m, toy_corpus(5, rows=24), epochs=3, lr=0.0)
        for k in m.params:
            np.testing.assert_array_equal(tuned.params[k], m.params[k])
        assert len(set(rep.val_loss + [rep.initial_val_loss])) == 1

    def test_taps_untouched(self):
        taps = DEFAULT_OPERATOR.taps.copy()
        joint_finetune(init_model(SMALL), toy_corpus(4, rows=24), epochs=2, lr=1e-2)
        assert DEFAULT_OPERATOR.taps.tobytes() == taps.tobytes()
