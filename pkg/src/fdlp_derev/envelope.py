"""Envelope-domain reverberation model and log-domain gain arithmetic.

Gains follow the convention ``gain = log m_clean - log m_reverb`` so that
adding a gain to a reverberant log-envelope moves it toward the clean one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import FDLPConfig, Signal, fdlp_analyze
from .errors import ValidationError
from .reverb import RoomImpulseResponse, convolve, split_rir


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")


def predict_reverb_envelope(m_x, m_h) -> np.ndarray:
    """Half the linear convolution of two envelopes, truncated to ``len(m_x)``.

    Accepts 1-D envelopes or (time, band) matrices; matrices are convolved
    band by band.
    """
    m_x = np.asarray(m_x, dtype=np.float64)
    m_h = np.asarray(m_h, dtype=np.float64)
    if np.any(m_x < 0) or np.any(m_h < 0):
        raise ValidationError("envelopes must be non-negative")
    if m_x.ndim == 1:
        return 0.5 * np.convolve(m_x, m_h)[: m_x.shape[0]]
    if m_x.shape[1:] != m_h.shape[1:]:
        raise ValidationError(f"band count mismatch: {m_x.shape} vs {m_h.shape}")
    out = np.empty_like(m_x)
    for q in range(m_x.shape[1]):
        out[:, q] = 0.5 * np.convolve(m_x[:, q], m_h[:, q])[: m_x.shape[0]]
    return out


def rir_envelope(h: RoomImpulseResponse, config: FDLPConfig = FDLPConfig()) -> np.ndarray:
    """FDLP envelopes of the RIR zero-padded (or truncated) to one segment."""
    n = config.segment_samples
    padded = np.zeros(n)
    m = min(n, len(h))
    padded[:m] = h.samples[:m]
    return fdlp_analyze(padded, config)


def decompose_early_late(x: Signal, h: RoomImpulseResponse, config: FDLPConfig = FDLPConfig()):
    """FDLP envelopes of ``x`` convolved with the early and late RIR parts."""
    h_early, h_late = split_rir(h)
    m_early = fdlp_analyze(convolve(x, h_early), config)
    m_late = fdlp_analyze(convolve(x, h_late), config)
    return m_early, m_late


def floored_log(env, floor=None) -> np.ndarray:
    env = np.asarray(env, dtype=np.float64)
    if floor is None:
        floor = np.finfo(np.float64).tiny
    return np.log(np.maximum(env, floor))


def residual_target(clean, reverb, floor=None) -> np.ndarray:
    """Log-domain gain ``log(clean) - log(reverb)`` after the envelope floor."""
    clean = np.asarray(clean, dtype=np.float64)
    reverb = np.asarray(reverb, dtype=np.float64)
    _check_same_shape(clean, reverb)
    return floored_log(clean, floor) - floored_log(reverb, floor)


def apply_gain(log_reverb, gain) -> np.ndarray:
    log_reverb = np.asarray(log_reverb, dtype=np.float64)
    gain = np.asarray(gain, dtype=np.float64)
    _check_same_shape(log_reverb, gain)
    return log_reverb + gain


@dataclass(frozen=True)
class Distortion:
    log_mse_per_band: np.ndarray
    correlation_per_band: np.ndarray

    @property
    def log_mse(self) -> float:
        return float(np.mean(self.log_mse_per_band))

    @property
    def correlation(self) -> float:
        return float(np.mean(self.correlation_per_band))


def pearson_columns(a, b) -> np.ndarray:
    """Pearson correlation of matching columns; constant columns give 1 if equal else 0."""
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    num = np.sum(a * b, axis=0)
    den = np.sqrt(np.sum(a * a, axis=0) * np.sum(b * b, axis=0))
    out = np.zeros(a.shape[1])
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    flat = ~ok
    out[flat] = np.where(np.all(np.isclose(a[:, flat], b[:, flat]), axis=0), 1.0, 0.0)
    return out


def envelope_distortion(a, b) -> Distortion:
    """Per-band log-MSE and Pearson correlation of log envelopes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_shape(a, b)
    if a.ndim == 1:
        a, b = a[:, None], b[:, None]
    la, lb = floored_log(a), floored_log(b)
    return Distortion(np.mean((la - lb) ** 2, axis=0), pearson_columns(la, lb))
