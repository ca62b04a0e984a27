"""Self-checks behind ``fdlp-derev verify``.

Every check compares the implementation against an independent route
(brute-force sums, dense solves, the Hilbert envelope, finite differences)
and returns a one-line result.  Output is a pure function of the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from . import dsp
from .checkpoint import save_model
from .config import Config
from .envelope import apply_gain, floored_log, pearson_columns, predict_reverb_envelope, residual_target, rir_envelope
from .features import DEFAULT_OPERATOR, fdlp_features, integrate
from .gain import (
    GainConfig,
    backward,
    gain_tape,
    init_model,
    joint_finetune,
    joint_tape,
    split_indices,
    train,
)
from .pipeline import synthetic_corpus, synthetic_pair
from .synth import am_tone

SUITES = ("dsp", "eq2", "grad", "all")


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


# --------------------------------------------------------------------------
# Oracles
# --------------------------------------------------------------------------


def brute_dct(x) -> np.ndarray:
    n = len(x)
    k = np.arange(n)[:, None]
    basis = np.cos(np.pi * k * (2 * np.arange(n)[None, :] + 1) / (2 * n))
    scale = np.full(n, math.sqrt(2.0 / n))
    scale[0] = math.sqrt(1.0 / n)
    return scale * (basis @ np.asarray(x, dtype=np.float64))


def dense_lp(r, order) -> np.ndarray:
    """Predictor from a dense solve of the Toeplitz normal equations."""
    big_r = scipy.linalg.toeplitz(r[:order])
    return np.concatenate([[1.0], np.linalg.solve(big_r, -r[1 : order + 1])])


def random_autocorrelation(rng, order) -> np.ndarray:
    n = order + int(rng.integers(16, 400))
    x = rng.standard_normal(n)
    x = np.convolve(x, rng.uniform(-0.5, 1.0, int(rng.integers(1, 4))), mode="same")
    return dsp.autocorrelation(x, order)


def fd_gradient_check(make_tape, model, h=1e-4):
    """Largest error of reverse-mode gradients against central differences.

    Relative error counts where either gradient exceeds 1e-6; below that the
    absolute error is compared against 1e-8.  When a perturbation flips a ReLU
    the step is shrunk so the difference quotient stays on one linear piece.
    """
    base = make_tape(model)
    base_masks = [m.copy() for m in base.masks]
    grads = backward(base)
    worst_rel = 0.0
    failures = 0
    for name, p in model.params.items():
        for idx in np.ndindex(p.shape):
            old = p[idx]
            step = h
            for _ in range(4):
                p[idx] = old + step
                plus = make_tape(model)
                p[idx] = old - step
                minus = make_tape(model)
                p[idx] = old
                same = all(
                    np.array_equal(a, b) and np.array_equal(a, c)
                    for a, b, c in zip(base_masks, plus.masks, minus.masks)
                )
                if same:
                    break
                step /= 10.0
            num = (float(plus.loss.value) - float(minus.loss.value)) / (2.0 * step)
            ana = float(grads[name][idx])
            scale = max(abs(num), abs(ana))
            if scale < 1e-6:
                if abs(num - ana) >= 1e-8:
                    failures += 1
            else:
                rel = abs(num - ana) / scale
                worst_rel = max(worst_rel, rel)
                if rel >= 1e-4:
                    failures += 1
    return worst_rel, failures


def small_instance(seed: int, frames: int = 32):
    rng = np.random.default_rng(seed)
    model = init_model(GainConfig(conv_layers=((2, 3, 3), (2, 5, 3)), seed=seed))
    log_reverb = rng.normal(0.0, 1.5, (frames, 36))
    target = rng.normal(0.0, 1.0, (frames, 36))
    clean_env = np.exp(rng.normal(0.0, 1.0, (frames, 36)))
    clean_feats = np.log(DEFAULT_OPERATOR.apply(clean_env))
    return model, log_reverb, target, clean_feats


# --------------------------------------------------------------------------
# Suites
# --------------------------------------------------------------------------


def check_dsp(cfg: Config, rng) -> list[CheckResult]:
    out = []
    worst = 0.0
    for n in (4, 256, 32000):
        x = rng.standard_normal(n)
        worst = max(worst, float(np.linalg.norm(dsp.idct(dsp.dct(x)) - x) / np.linalg.norm(x)))
    out.append(CheckResult("dct_roundtrip", worst < 1e-10, f"max relative error {worst:.3e}"))

    x = rng.standard_normal(97)
    err = float(np.max(np.abs(dsp.dct(x) - brute_dct(x))))
    out.append(CheckResult("dct_bruteforce", err < 1e-9, f"max abs error {err:.3e}"))

    seq = rng.standard_normal(300)
    direct = np.array([np.dot(seq[: 300 - k], seq[k:]) for k in range(41)])
    err = float(np.max(np.abs(dsp.autocorrelation(seq, 40) - direct)))
    out.append(CheckResult("autocorr_direct", err < 1e-10, f"max abs error {err:.3e}"))

    worst = 0.0
    for _ in range(20):
        order = int(rng.integers(1, 161))
        r = random_autocorrelation(rng, order)
        worst = max(worst, float(np.max(np.abs(dsp.levinson_durbin(r, order).coefficients - dense_lp(r, order)))))
    out.append(CheckResult("levinson_dense", worst < 1e-8, f"max coefficient deviation {worst:.3e}"))

    fcfg = cfg.fdlp()
    bank = dsp.mel_bank_for(fcfg)
    corrs = []
    for _ in range(4):
        q = int(rng.integers(0, fcfg.num_bands))
        sig = am_tone(bank.centers_hz[q], rng.uniform(1.0, 8.0), rng.uniform(0.4, 0.9), phase=rng.uniform(0, 2 * np.pi))
        env = dsp.fdlp_analyze(sig, fcfg)
        sub = dsp.idct(dsp.subband_coeffs(dsp.dct(sig.samples), bank, q))
        step = fcfg.segment_samples // fcfg.envelope_samples
        hil = dsp.hilbert_envelope(sub)[::step]
        corrs.append(float(np.corrcoef(env[:, q], hil)[0, 1]))
    out.append(CheckResult("fdlp_vs_hilbert", min(corrs) >= 0.95, f"min correlation {min(corrs):.4f}"))

    env = dsp.fdlp_analyze(rng.standard_normal(fcfg.segment_samples) * 0.1, fcfg)
    feats = fdlp_features(env)
    ok = (
        env.shape == (800, 36)
        and feats.shape == (198, 36)
        and bank.num_bands == 36
        and bank.f_lo == 200.0
        and bank.f_hi == 6500.0
    )
    out.append(CheckResult("shapes", ok, f"envelopes {env.shape}, features {feats.shape}, bands {bank.num_bands}"))
    return out


def convolution_model_correlations(cfg: Config, sources_per_t60: int, seed: int) -> np.ndarray:
    fcfg = cfg.fdlp()
    corrs = []
    for t60 in cfg.t60_grid:
        for i in range(sources_per_t60):
            x, r, h = synthetic_pair(seed * 1000 + i, t60, config=fcfg)
            m_x = dsp.fdlp_analyze(x, fcfg)
            m_r = dsp.fdlp_analyze(r, fcfg)
            pred = predict_reverb_envelope(m_x, rir_envelope(h, fcfg))
            corrs.extend(pearson_columns(np.log(pred), np.log(m_r)))
    return np.asarray(corrs)


def check_convolution_model(cfg: Config, rng, sources_per_t60: int = 3) -> list[CheckResult]:
    corrs = convolution_model_correlations(cfg, sources_per_t60, int(rng.integers(1 << 30)))
    med = float(np.median(corrs))
    out = [CheckResult("envelope_convolution_model", med >= 0.8, f"median log-envelope correlation {med:.4f} over {corrs.size} bands")]

    x, r, _ = synthetic_pair(int(rng.integers(1 << 30)), cfg.train_t60, config=cfg.fdlp())
    m_x = dsp.fdlp_analyze(x, cfg.fdlp())
    m_r = dsp.fdlp_analyze(r, cfg.fdlp())
    est = apply_gain(floored_log(m_r), residual_target(m_x, m_r))
    err_env = float(np.max(np.abs(est - np.log(m_x))))
    err_feat = float(np.max(np.abs(np.log(integrate(np.exp(est))) - fdlp_features(m_x))))
    ok = err_env <= 1e-12 and err_feat <= 1e-10
    out.append(CheckResult("oracle_inverse", ok, f"log-envelope error {err_env:.3e}, feature error {err_feat:.3e}"))
    return out


def check_grad(cfg: Config, rng, instances: int = 3) -> list[CheckResult]:
    out = []
    for label, make in (
        ("grad_mse", lambda m, x, t, f: gain_tape(m, x, t)),
        ("grad_joint", lambda m, x, t, f: joint_tape(m, x, f)),
    ):
        worst, fails = 0.0, 0
        for _ in range(instances):
            model, x, t, f = small_instance(int(rng.integers(1 << 30)))
            w, n = fd_gradient_check(lambda m: make(m, x, t, f), model)
            worst, fails = max(worst, w), fails + n
        out.append(CheckResult(label, fails == 0, f"max relative error {worst:.3e}, {fails} mismatches over {instances} instances"))
    return out


def check_learning(cfg: Config, rng, out_dir: Path | None) -> list[CheckResult]:
    seed = int(rng.integers(1 << 30))
    corpus = synthetic_corpus(cfg.verify_segments, cfg.train_t60, cfg.snr_db, seed, cfg.fdlp())
    tr, va = split_indices(len(corpus), seed, max(cfg.val_fraction, 2.0 / len(corpus)))
    train_set = [corpus[i] for i in tr]
    val = [corpus[i] for i in va]
    zero = float(np.mean([np.mean(ex.target**2) for ex in val]))
    model = init_model(GainConfig(num_bands=cfg.num_bands, conv_layers=cfg.conv_layers, seed=seed))
    model, report = train(model, train_set, cfg.verify_epochs, cfg.batch, seed, cfg.lr, val=val)
    ratio = report.val_loss[-1] / zero if report.epochs else 1.0
    out = [CheckResult("learning", ratio <= 0.7, f"held-out gain MSE / zero predictor = {ratio:.4f}")]

    taps = DEFAULT_OPERATOR.taps.copy()
    tuned, jrep = joint_finetune(model, train_set, max(1, cfg.joint_epochs // 2), cfg.batch, seed, cfg.joint_lr, val=val)
    jratio = jrep.val_loss[-1] / jrep.initial_val_loss
    frozen = np.array_equal(taps, DEFAULT_OPERATOR.taps)
    out.append(CheckResult("joint_finetune", jratio <= 1.0 and frozen, f"held-out feature MSE ratio {jratio:.4f}, frozen taps {'identical' if frozen else 'CHANGED'}"))
    if out_dir is not None:
        save_model(tuned, out_dir / "verify_model.ckpt", {"ar_order": cfg.ar_order})
    return out


def run_suite(suite: str, cfg: Config, out_dir=None) -> list[CheckResult]:
    if suite not in SUITES:
        from .errors import ValidationError

        raise ValidationError(f"unknown suite {suite!r}; valid suites: {', '.join(SUITES)}")
    rng = np.random.default_rng([cfg.seed, 7])
    out_dir = Path(out_dir) if out_dir is not None else None
    results = []
    if suite in ("dsp", "all"):
        results += check_dsp(cfg, rng)
    if suite in ("eq2", "all"):
        results += check_convolution_model(cfg, rng)
    if suite in ("grad", "all"):
        results += check_grad(cfg, rng)
    if suite == "all":
        results += check_learning(cfg, rng, out_dir)
    return results
