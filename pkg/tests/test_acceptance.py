"""The nine acceptance criteria, each at its stated tolerance and runtime budget.

Every test prints one ``ACCEPTANCE <n> PASS|FAIL`` line; the lines are also
collected into the terminal summary by ``conftest.py``.
"""

import time

import numpy as np
import pytest

from fdlp_derev import cli, dsp
from fdlp_derev.audio_io import write_wav
from fdlp_derev.checkpoint import save_model
from fdlp_derev.envelope import (
    apply_gain,
    envelope_distortion,
    floored_log,
    pearson_columns,
    predict_reverb_envelope,
    residual_target,
    rir_envelope,
)
from fdlp_derev.features import DEFAULT_OPERATOR, baseline_logmel, fdlp_features, integrate, read_features
from fdlp_derev.gain import GainConfig, forward, gain_tape, init_model, joint_finetune, joint_tape, split_indices, train
from fdlp_derev.pipeline import synthetic_corpus, synthetic_pair
from fdlp_derev.synth import am_tone
from fdlp_derev.verify import fd_gradient_check, small_instance

import oracles

CFG = dsp.FDLPConfig()
SEED = 2024


def test_1_fdlp_fidelity(acceptance_record):
    t0 = time.perf_counter()
    rng = np.random.default_rng([SEED, 1])
    bank = dsp.mel_bank_for(CFG)
    step = CFG.segment_samples // CFG.envelope_samples
    corrs = []
    for _ in range(20):
        fc = rng.uniform(bank.centers_hz[0], bank.centers_hz[-1])
        sig = am_tone(fc, rng.uniform(1.0, 8.0), rng.uniform(0.3, 0.9), phase=rng.uniform(0, 2 * np.pi))
        env = dsp.fdlp_analyze(sig, CFG)
        coeffs = dsp.dct(sig.samples)
        energy = np.array([np.sum(dsp.subband_coeffs(coeffs, bank, q) ** 2) for q in range(36)])
        for q in np.nonzero(energy >= 0.01 * energy.max())[0]:
            ref = oracles.analytic_power(dsp.idct(dsp.subband_coeffs(coeffs, bank, q)))[::step]
            corrs.append(np.corrcoef(env[:, q], ref)[0, 1])
    secs = time.perf_counter() - t0
    worst = float(np.min(corrs))
    ok = worst >= 0.95 and secs < 60
    acceptance_record(1, ok, f"min correlation {worst:.4f} over {len(corrs)} energetic bands (>= 0.95), {secs:.1f} s")
    assert ok


def test_2_levinson_oracle(acceptance_record):
    t0 = time.perf_counter()
    rng = np.random.default_rng([SEED, 2])
    orders = np.concatenate([[1, 160], rng.integers(1, 161, 98)])
    worst = 0.0
    for order in orders:
        x = rng.standard_normal(int(order) + int(rng.integers(20, 600)))
        x = np.convolve(x, rng.uniform(-1, 1, int(rng.integers(1, 5))), mode="same")
        r = dsp.autocorrelation(x, int(order))
        a = dsp.levinson_durbin(r, int(order)).coefficients
        worst = max(worst, float(np.max(np.abs(a - oracles.toeplitz_solve(r, int(order))))))
    secs = time.perf_counter() - t0
    ok = worst < 1e-8 and secs < 10
    acceptance_record(2, ok, f"max coefficient deviation {worst:.2e} over 100 cases, orders 1-160 (< 1e-8), {secs:.1f} s")
    assert ok


def test_3_envelope_convolution_model(acceptance_record):
    t0 = time.perf_counter()
    per_t60 = {}
    for t60 in (0.2, 0.4, 0.6):
        corrs = []
        for i in range(10):
            x, r, h = synthetic_pair(SEED * 100 + i, t60)
            m_x = dsp.fdlp_analyze(x, CFG)
            m_r = dsp.fdlp_analyze(r, CFG)
            pred = predict_reverb_envelope(m_x, rir_envelope(h, CFG))
            corrs.extend(pearson_columns(np.log(pred), np.log(m_r)))
        per_t60[t60] = np.asarray(corrs)
    secs = time.perf_counter() - t0
    med = float(np.median(np.concatenate(list(per_t60.values()))))
    detail = ", ".join(f"t60={k}: {np.median(v):.3f}" for k, v in per_t60.items())
    ok = med >= 0.8 and secs < 300
    acceptance_record(3, ok, f"median log-envelope correlation {med:.4f} (>= 0.8; {detail}), {secs:.1f} s")
    assert ok


def test_4_oracle_inverse(acceptance_record):
    env_err = feat_err = 0.0
    for i, (t60, snr) in enumerate([(0.2, np.inf), (0.5, np.inf), (0.6, 20.0), (0.4, 5.0)]):
        x, r, _ = synthetic_pair(SEED + i, t60, snr)
        m_x = dsp.fdlp_analyze(x, CFG)
        m_r = dsp.fdlp_analyze(r, CFG)
        est = apply_gain(floored_log(m_r), residual_target(m_x, m_r))
        env_err = max(env_err, float(np.max(np.abs(est - np.log(m_x)))))
        feat_err = max(feat_err, float(np.max(np.abs(fdlp_features(np.exp(est)) - fdlp_features(m_x)))))
    ok = env_err <= 1e-12 and feat_err <= 1e-10
    acceptance_record(4, ok, f"log-envelope error {env_err:.2e} (<= 1e-12), feature error {feat_err:.2e} (<= 1e-10)")
    assert ok


def test_5_gradient_correctness(acceptance_record):
    t0 = time.perf_counter()
    rng = np.random.default_rng([SEED, 5])
    summary = {}
    for label in ("mse", "joint"):
        worst, fails = 0.0, 0
        for _ in range(10):
            model, x, t, f = small_instance(int(rng.integers(1 << 30)))
            if label == "mse":
                w, n = fd_gradient_check(lambda m: gain_tape(m, x, t), model)
            else:
                w, n = fd_gradient_check(lambda m: joint_tape(m, x, f), model)
            worst, fails = max(worst, w), fails + n
        summary[label] = (worst, fails)
    secs = time.perf_counter() - t0
    ok = all(f == 0 and w < 1e-4 for w, f in summary.values()) and secs < 120
    detail = "; ".join(f"{k}: max rel {w:.2e}, {f} mismatches" for k, (w, f) in summary.items())
    acceptance_record(5, ok, f"{detail} over 10 instances each (< 1e-4), {secs:.1f} s")
    assert ok


@pytest.fixture(scope="module")
def trained():
    """Criterion-6 model: 50 matched-condition segments, seeded 90/10 split."""
    t0 = time.perf_counter()
    corpus = synthetic_corpus(50, t60=0.5, seed=SEED)
    tr, va = split_indices(50, SEED)
    train_set, val = [corpus[i] for i in tr], [corpus[i] for i in va]
    model, report = train(init_model(GainConfig(seed=SEED)), train_set, epochs=20, batch=4, seed=SEED, lr=3e-3, val=val)
    return model, report, train_set, val, time.perf_counter() - t0


def test_6_learning_efficacy(trained, acceptance_record):
    model, report, _, val, secs = trained
    zero = float(np.mean([np.mean(ex.target**2) for ex in val]))
    ratio = report.val_loss[-1] / zero
    base, derev = [], []
    for ex in val:
        log_clean = ex.log_reverb + ex.target
        est = apply_gain(ex.log_reverb, forward(model, ex.log_reverb))
        base.append(envelope_distortion(np.exp(ex.log_reverb), np.exp(log_clean)).log_mse)
        derev.append(envelope_distortion(np.exp(est), np.exp(log_clean)).log_mse)
    reduction = 1.0 - np.mean(derev) / np.mean(base)
    ok = ratio <= 0.7 and reduction >= 0.3 and secs < 900
    acceptance_record(
        6, ok,
        f"held-out gain MSE / zero predictor {ratio:.3f} (<= 0.7), log-envelope MSE reduction {100 * reduction:.1f}% "
        f"(>= 30%), {secs:.0f} s",
    )
    assert ok


def test_7_joint_finetune(trained, acceptance_record):
    model, _, train_set, val, _ = trained
    taps = DEFAULT_OPERATOR.taps.tobytes()
    t0 = time.perf_counter()
    _, rep = joint_finetune(model, train_set, epochs=5, batch=4, seed=SEED, lr=1e-4, val=val)
    secs = time.perf_counter() - t0
    ratio = rep.val_loss[-1] / rep.initial_val_loss
    frozen = DEFAULT_OPERATOR.taps.tobytes() == taps
    ok = ratio <= 1.0 and frozen and secs < 600
    acceptance_record(
        7, ok,
        f"held-out feature MSE ratio {ratio:.4f} (<= 1.0), integration taps {'bit-identical' if frozen else 'CHANGED'}, "
        f"{secs:.0f} s",
    )
    assert ok


def test_8_shapes(acceptance_record):
    x, _, _ = synthetic_pair(SEED, 0.3)
    env = dsp.fdlp_analyze(x, CFG)
    feats = fdlp_features(env)
    fbank = baseline_logmel(x, CFG)
    bank = dsp.mel_bank_for(CFG)
    freqs = dsp.dct_frequencies(bank.dct_len, bank.sample_rate)
    lo, hi = freqs[bank.support(0)[0]], freqs[bank.support(35)[1] - 1]
    ok = (
        env.shape == (800, 36)
        and feats.shape == (198, 36)
        and integrate(env).shape == (198, 36)
        and fbank.shape == (198, 36)
        and bank.num_bands == 36
        and (bank.f_lo, bank.f_hi) == (200.0, 6500.0)
        and 200.0 <= lo < 200.5
        and 6499.5 < hi <= 6500.0
    )
    acceptance_record(
        8, ok,
        f"envelopes {env.shape}, features {feats.shape}, fbank {fbank.shape}, {bank.num_bands} bands "
        f"spanning {lo:.2f}-{hi:.2f} Hz",
    )
    assert ok


def test_9_verify_determinism(tmp_path, capsys, acceptance_record):
    codes = []
    for name in ("a", "b"):
        codes.append(cli.main(["--seed", "0", "verify", "all", "--out", str(tmp_path / name)]))
        capsys.readouterr()
    same_report = (tmp_path / "a/verify_report.txt").read_bytes() == (tmp_path / "b/verify_report.txt").read_bytes()
    same_ckpt = (tmp_path / "a/verify_model.ckpt").read_bytes() == (tmp_path / "b/verify_model.ckpt").read_bytes()
    ok = same_report and same_ckpt and codes == [0, 0]
    acceptance_record(
        9, ok,
        f"report {'identical' if same_report else 'DIFFERS'}, checkpoint {'identical' if same_ckpt else 'DIFFERS'}, "
        f"exit codes {codes}",
    )
    assert ok


def test_dereverb_cli_reduces_distortion(trained, tmp_path, capsys):
    """The trained model through the CLI moves held-out features toward clean ones."""
    model, *_ = trained
    ckpt = save_model(model, tmp_path / "m.ckpt", {"ar_order": 160})
    x, r, _ = synthetic_pair(SEED + 999, 0.5)
    peak = np.max(np.abs(r.samples))
    write_wav(tmp_path / "clean.wav", dsp.Signal(x.samples / peak * 0.9))
    write_wav(tmp_path / "rev.wav", dsp.Signal(r.samples / peak * 0.9))

    def first(*argv):
        assert cli.main([str(a) for a in argv]) == 0
        return read_features(capsys.readouterr().out.split()[0]).astype(np.float64)

    clean = first("extract", tmp_path / "clean.wav", tmp_path / "c")
    rev = first("extract", tmp_path / "rev.wav", tmp_path / "r")
    der = first("dereverb", tmp_path / "rev.wav", ckpt, tmp_path / "d")
    assert np.mean((der - clean) ** 2) < np.mean((rev - clean) ** 2)
