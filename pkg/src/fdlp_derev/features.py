"""Envelope integration into 25 ms / 10 ms frames, log compression, feature files."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import FDLPConfig, mel_bank_for, prepare_segment
from .errors import NumericalError, ValidationError

MAGIC = b"FDLPFEAT"
VERSION = 1
HEADER = struct.Struct("<8sIII")


def hamming(n: int) -> np.ndarray:
    return 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(n) / (n - 1))


@dataclass(frozen=True)
class IntegrationOperator:
    """Fixed banded operator: frame ``t`` = sum_k taps[k] * env[shift * t + k].

    Identical for every band and never trained.
    """

    taps: np.ndarray
    shift: int
    trainable: bool = False

    @classmethod
    def for_rate(cls, envelope_rate=400, frame_ms=25.0, shift_ms=10.0):
        length = int(round(frame_ms * 1e-3 * envelope_rate))
        shift = int(round(shift_ms * 1e-3 * envelope_rate))
        taps = hamming(length)
        taps.flags.writeable = False
        return cls(taps, shift)

    @property
    def length(self) -> int:
        return self.taps.shape[0]

    def num_frames(self, num_samples: int) -> int:
        if num_samples < self.length:
            return 0
        return (num_samples - self.length) // self.shift + 1

    def apply(self, env) -> np.ndarray:
        """Apply along axis 0; works on a single band or a (time, band) matrix."""
        env = np.asarray(env, dtype=np.float64)
        n_frames = self.num_frames(env.shape[0])
        stop = self.shift * (n_frames - 1) + 1
        out = np.zeros((n_frames,) + env.shape[1:])
        for k in range(self.length):
            out += self.taps[k] * env[k : k + stop : self.shift]
        return out

    def transpose_apply(self, grad, num_samples: int) -> np.ndarray:
        """Adjoint of :meth:`apply`, mapping frame gradients back to envelope samples."""
        grad = np.asarray(grad, dtype=np.float64)
        n_frames = grad.shape[0]
        stop = self.shift * (n_frames - 1) + 1
        out = np.zeros((num_samples,) + grad.shape[1:])
        for k in range(self.length):
            out[k : k + stop : self.shift] += self.taps[k] * grad
        return out

    def matrix(self, num_samples: int) -> np.ndarray:
        n_frames = self.num_frames(num_samples)
        m = np.zeros((n_frames, num_samples))
        for t in range(n_frames):
            m[t, self.shift * t : self.shift * t + self.length] = self.taps
        return m


DEFAULT_OPERATOR = IntegrationOperator.for_rate()


def integrate(env, operator: IntegrationOperator = DEFAULT_OPERATOR, envelope_rate=400) -> np.ndarray:
    """Hamming-window integration of (time, band) envelopes into frames."""
    if envelope_rate != 400 and operator is DEFAULT_OPERATOR:
        raise ValidationError(f"default operator expects 400 Hz envelopes, got {envelope_rate} Hz")
    env = np.asarray(env, dtype=np.float64)
    if env.ndim != 2:
        raise ValidationError("expected a (time, band) envelope matrix")
    if env.shape[0] < operator.length:
        raise ValidationError(f"envelope too short for a {operator.length}-sample frame")
    return operator.apply(env)


def log_compress(energies) -> np.ndarray:
    energies = np.asarray(energies, dtype=np.float64)
    if not np.all(energies > 0):
        raise NumericalError("log_compress: non-positive energy after floor")
    return np.log(energies)


def fdlp_features(env, operator: IntegrationOperator = DEFAULT_OPERATOR) -> np.ndarray:
    return log_compress(integrate(env, operator))


def baseline_logmel(samples, config: FDLPConfig = FDLPConfig(), n_fft: int = 512, pad: bool = False):
    """36-band log-mel energies from a 25 ms / 10 ms Hamming STFT.

    Uses the same sine-tapered mel windows as the FDLP decomposition,
    squared and evaluated at the FFT bin frequencies.
    """
    x = prepare_segment(samples, config, pad=pad)
    sr = config.sample_rate
    win = int(round(0.025 * sr))
    hop = int(round(0.010 * sr))
    n_frames = (x.shape[0] - win) // hop + 1
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[::hop][:n_frames]
    spec = np.fft.rfft(frames * hamming(win), n=max(n_fft, win), axis=1)
    power = spec.real**2 + spec.imag**2
    bank = mel_bank_for(config)
    freqs = np.fft.rfftfreq(max(n_fft, win), 1.0 / sr)
    weights = bank.response(freqs) ** 2
    energies = power @ weights.T
    floor = 1e-10 * (float(np.mean(x**2)) + 1e-20)
    return log_compress(np.maximum(energies, floor))


# --------------------------------------------------------------------------
# Feature files
# --------------------------------------------------------------------------


def write_features(values, path, csv: bool = False) -> Path:
    """Write ``FDLPFEAT`` binary (or CSV when ``csv`` is set)."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValidationError("feature matrix must be 2-D")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if csv:
        np.savetxt(path, values, delimiter=",", fmt="%.9g")
        return path
    rows, cols = values.shape
    data = np.ascontiguousarray(values, dtype="<f4")
    with path.open("wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, rows, cols))
        f.write(data.tobytes())
    return path


def read_features(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < HEADER.size:
        raise ValidationError(f"unexpected end of file at byte {len(blob)} (header needs {HEADER.size})")
    magic, version, rows, cols = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ValidationError(f"bad magic {magic!r} at byte 0")
    if version != VERSION:
        raise ValidationError(f"unsupported version {version} at byte 8")
    need = HEADER.size + rows * cols * 4
    if len(blob) < need:
        raise ValidationError(f"unexpected end of file at byte {len(blob)} (expected {need})")
    if len(blob) > need:
        raise ValidationError(f"trailing data at byte {need}")
    return np.frombuffer(blob, dtype="<f4", offset=HEADER.size).reshape(rows, cols).copy()
