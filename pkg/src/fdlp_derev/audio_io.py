"""Mono 16-bit PCM WAV reading and writing."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .dsp import Signal
from .errors import AudioFormatError

FULL_SCALE = 32768.0


def read_wav(path, sample_rate: int = 16000) -> Signal:
    """Read a mono 16-bit little-endian PCM WAV at ``sample_rate``."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as f:
            channels = f.getnchannels()
            width = f.getsampwidth()
            rate = f.getframerate()
            comp = f.getcomptype()
            frames = f.readframes(f.getnframes())
    except wave.Error as exc:
        raise AudioFormatError(f"{path}: unsupported WAV (format): {exc}") from exc
    except EOFError as exc:
        raise AudioFormatError(f"{path}: truncated WAV header") from exc
    if comp != "NONE":
        raise AudioFormatError(f"{path}: unsupported WAV compression={comp!r}, expected PCM")
    if channels != 1:
        raise AudioFormatError(f"{path}: unsupported WAV channels={channels}, expected 1")
    if width != 2:
        raise AudioFormatError(f"{path}: unsupported WAV sample_width={8 * width} bits, expected 16")
    if rate != sample_rate:
        raise AudioFormatError(f"{path}: unsupported WAV sample_rate={rate}, expected {sample_rate}")
    pcm = np.frombuffer(frames, dtype="<i2")
    return Signal(pcm.astype(np.float64) / FULL_SCALE, rate)


def to_pcm16(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    return np.clip(np.round(x * FULL_SCALE), -32768, 32767).astype("<i2")


def write_wav(path, signal: Signal) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(int(signal.sample_rate))
        f.writeframes(to_pcm16(signal.samples).tobytes())
