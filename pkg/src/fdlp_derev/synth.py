"""Synthetic test sources: AM tones and speech-like modulated noise."""

from __future__ import annotations

import numpy as np

from .dsp import Signal


def am_tone(carrier_hz, mod_hz, depth=0.8, duration=2.0, sample_rate=16000, phase=0.0, amplitude=0.5):
    """``amplitude * (1 + depth cos(2 pi fm t + phase)) cos(2 pi fc t)``."""
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    env = 1.0 + depth * np.cos(2 * np.pi * mod_hz * t + phase)
    return Signal(amplitude * env * np.cos(2 * np.pi * carrier_hz * t), sample_rate)


def _syllable_envelope(n, sample_rate, rng):
    """Sum of raised-cosine bursts, 80-300 ms long, separated by 40-250 ms gaps."""
    env = np.zeros(n)
    pos = int(rng.uniform(0.0, 0.2) * sample_rate)
    while pos < n:
        length = int(rng.uniform(0.08, 0.30) * sample_rate)
        seg = np.hanning(length) * rng.uniform(0.3, 1.0)
        end = min(n, pos + length)
        env[pos:end] += seg[: end - pos]
        pos += length + int(rng.uniform(0.04, 0.25) * sample_rate)
    return env


def speech_like(duration=2.0, sample_rate=16000, seed=0, floor_db=-40.0, amplitude=0.3):
    """Noise with syllabic bursts and per-burst random spectral coloring.

    Each burst gets its own smooth spectral shape (three formant-like bumps
    over a -6 dB/octave tilt) so sub-band envelopes differ across bands.  A
    stationary noise floor at ``floor_db`` keeps every band non-silent.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    tilt = 1.0 / np.sqrt(1.0 + (freqs / 500.0) ** 2)
    out = np.zeros(n)
    for _ in range(3):
        env = _syllable_envelope(n, sample_rate, rng)
        shape = np.full_like(freqs, 0.15)
        for _ in range(3):
            fc = rng.uniform(250.0, 6000.0)
            bw = rng.uniform(100.0, 600.0)
            shape += np.exp(-0.5 * ((freqs - fc) / bw) ** 2)
        noise = np.fft.irfft(np.fft.rfft(rng.standard_normal(n)) * shape * tilt, n)
        out += env * noise
    out /= np.sqrt(np.mean(out**2)) + 1e-30
    floor = rng.standard_normal(n) * 10.0 ** (floor_db / 20.0)
    out = out + floor
    out *= amplitude / np.max(np.abs(out))
    return Signal(out, sample_rate)
