"""Glue between signals and training examples: segmentation, pairing, synthetic corpora."""

from __future__ import annotations

import math

import numpy as np

from .dsp import FDLPConfig, Signal, fdlp_analyze
from .envelope import floored_log, residual_target
from .features import DEFAULT_OPERATOR
from .gain import Example, clean_features
from .reverb import add_noise, convolve, synth_rir
from .synth import speech_like


def segments(signal: Signal, config: FDLPConfig = FDLPConfig()):
    """Non-overlapping segments as ``(samples, valid_samples)``.

    A trailing partial segment is zero-padded and reported with its true
    length, so a 1 s signal yields one padded segment.
    """
    n = config.segment_samples
    x = signal.samples
    out = []
    full = len(x) // n
    for i in range(full):
        out.append((x[i * n : (i + 1) * n], n))
    rest = len(x) - full * n
    if rest > 0:
        tail = np.zeros(n)
        tail[:rest] = x[full * n :]
        out.append((tail, rest))
    return out


def valid_counts(valid_samples: int, config: FDLPConfig = FDLPConfig(), operator=DEFAULT_OPERATOR):
    """Envelope rows and feature frames fully covered by real (unpadded) audio."""
    rows = int(math.ceil(valid_samples * config.envelope_samples / config.segment_samples))
    rows = min(rows, config.envelope_samples)
    return rows, max(1, operator.num_frames(rows))


def make_example(clean_seg, reverb_seg, valid_samples=None, config: FDLPConfig = FDLPConfig()) -> Example:
    m_x = fdlp_analyze(clean_seg, config)
    m_r = fdlp_analyze(reverb_seg, config)
    return example_from_envelopes(m_x, m_r, valid_samples, config)


def example_from_envelopes(m_x, m_r, valid_samples=None, config: FDLPConfig = FDLPConfig()) -> Example:
    rows = frames = None
    if valid_samples is not None and valid_samples < config.segment_samples:
        rows, frames = valid_counts(valid_samples, config)
    return Example(
        log_reverb=floored_log(m_r),
        target=residual_target(m_x, m_r),
        clean_feats=clean_features(m_x),
        valid_rows=rows,
        valid_frames=frames,
    )


def synthetic_pair(seed: int, t60: float, snr_db=math.inf, config: FDLPConfig = FDLPConfig()):
    """A speech-like clean segment and its reverberant (and optionally noisy) version."""
    ss = np.random.SeedSequence([seed, int(round(t60 * 1000))])
    src_seed, rir_seed, noise_seed = (int(s) for s in ss.generate_state(3))
    x = speech_like(config.segment_seconds, config.sample_rate, seed=src_seed)
    h = synth_rir(t60, config.sample_rate, seed=rir_seed)
    r = convolve(x, h)
    if math.isfinite(snr_db):
        r = add_noise(r, snr_db, seed=noise_seed)
    return x, r, h


def synthetic_corpus(n: int, t60: float = 0.5, snr_db=math.inf, seed: int = 0,
                     config: FDLPConfig = FDLPConfig()):
    """``n`` matched-condition training examples (single T60, fresh RIR per segment)."""
    examples = []
    for i in range(n):
        x, r, _ = synthetic_pair(seed * 100003 + i, t60, snr_db, config)
        examples.append(make_example(x.samples, r.samples, config=config))
    return examples
