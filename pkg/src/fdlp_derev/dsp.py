"""FDLP analysis: DCT, mel sub-band windowing, linear prediction, AR envelopes.

A 2 s segment at 16 kHz is transformed with an orthonormal DCT-II, split
into 36 mel-spaced sub-bands, and each sub-band's DCT sequence is fitted
with an all-pole model.  The model's power response over the half-period
grid is the sub-band temporal envelope, sampled at 400 Hz.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import NumericalError, ValidationError


@dataclass(frozen=True)
class FDLPConfig:
    sample_rate: int = 16000
    segment_seconds: float = 2.0
    envelope_rate: int = 400
    num_bands: int = 36
    f_lo: float = 200.0
    f_hi: float = 6500.0
    ar_order: int = 160

    @property
    def segment_samples(self) -> int:
        return int(round(self.segment_seconds * self.sample_rate))

    @property
    def envelope_samples(self) -> int:
        return int(round(self.segment_seconds * self.envelope_rate))


@dataclass(frozen=True)
class Signal:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValidationError("signal must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValidationError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(x)):
            raise ValidationError("signal contains non-finite samples")
        object.__setattr__(self, "samples", x)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class ARModel:
    coefficients: np.ndarray
    error_gain: float
    reflection: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def order(self) -> int:
        return self.coefficients.shape[0] - 1


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


# --------------------------------------------------------------------------
# DCT
# --------------------------------------------------------------------------


def dct(x) -> np.ndarray:
    """Orthonormal DCT-II."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValidationError("empty input")
    return scipy.fft.dct(x, type=2, norm="ortho")


def idct(c) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.size == 0:
        raise ValidationError("empty input")
    return scipy.fft.idct(c, type=2, norm="ortho")


def dct_frequencies(n: int, sample_rate: float) -> np.ndarray:
    """Frequency in Hz associated with each DCT-II coefficient index."""
    return np.arange(n) * sample_rate / (2.0 * n)


# --------------------------------------------------------------------------
# Mel windows
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MelWindowBank:
    """Sine-tapered mel windows over DCT coefficient indices.

    Band ``q`` is nonzero on ``starts[q] : starts[q] + len(weights[q])``.
    Adjacent windows overlap by half, so the squared windows sum to one
    between the first and last band centers.
    """

    num_bands: int
    f_lo: float
    f_hi: float
    sample_rate: float
    dct_len: int
    centers_hz: np.ndarray
    edges_mel: np.ndarray
    starts: tuple
    weights: tuple

    def response(self, freqs_hz) -> np.ndarray:
        """Window weights evaluated at arbitrary frequencies, (num_bands, len(freqs))."""
        m = hz_to_mel(freqs_hz)
        lo = self.edges_mel[:-2, None]
        hi = self.edges_mel[2:, None]
        u = (m[None, :] - lo) / (hi - lo)
        inside = (u > 0.0) & (u < 1.0)
        return np.where(inside, np.sin(np.pi * np.clip(u, 0.0, 1.0)), 0.0)

    def support(self, band: int) -> tuple[int, int]:
        return self.starts[band], self.starts[band] + self.weights[band].shape[0]

    def dense(self) -> np.ndarray:
        out = np.zeros((self.num_bands, self.dct_len))
        for q in range(self.num_bands):
            a, b = self.support(q)
            out[q, a:b] = self.weights[q]
        return out

    def coverage(self) -> np.ndarray:
        """Sum of squared windows per DCT index."""
        return np.sum(self.dense() ** 2, axis=0)


def make_mel_windows(num_bands=36, f_lo=200.0, f_hi=6500.0, sample_rate=16000, dct_len=32000):
    if num_bands < 1:
        raise ValidationError("num_bands must be >= 1")
    if f_hi > sample_rate / 2.0:
        raise ValidationError(f"band edge above Nyquist: f_hi={f_hi} > {sample_rate / 2.0}")
    if not 0.0 < f_lo < f_hi:
        raise ValidationError(f"need 0 < f_lo < f_hi, got f_lo={f_lo}, f_hi={f_hi}")
    edges_mel = np.linspace(hz_to_mel(f_lo), hz_to_mel(f_hi), num_bands + 2)
    centers_hz = mel_to_hz(edges_mel[1:-1])

    freqs = dct_frequencies(dct_len, sample_rate)
    mels = hz_to_mel(freqs)
    starts, weights = [], []
    for q in range(num_bands):
        lo, hi = edges_mel[q], edges_mel[q + 2]
        a = int(np.searchsorted(mels, lo, side="right"))
        b = int(np.searchsorted(mels, hi, side="left"))
        if b <= a:
            raise ValidationError(f"band {q} has no DCT coefficients; dct_len too short")
        u = (mels[a:b] - lo) / (hi - lo)
        starts.append(a)
        weights.append(np.sin(np.pi * u))
    return MelWindowBank(
        num_bands=num_bands,
        f_lo=float(f_lo),
        f_hi=float(f_hi),
        sample_rate=float(sample_rate),
        dct_len=int(dct_len),
        centers_hz=centers_hz,
        edges_mel=edges_mel,
        starts=tuple(starts),
        weights=tuple(weights),
    )


def subband_coeffs(coeffs, bank: MelWindowBank, band: int) -> np.ndarray:
    """Full-length copy of ``coeffs`` weighted by one band window, zero elsewhere."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if not 0 <= band < bank.num_bands:
        raise ValidationError(f"band {band} out of range [0, {bank.num_bands})")
    if coeffs.shape[0] != bank.dct_len:
        raise ValidationError(f"expected {bank.dct_len} coefficients, got {coeffs.shape[0]}")
    out = np.zeros_like(coeffs)
    a, b = bank.support(band)
    out[a:b] = coeffs[a:b] * bank.weights[band]
    return out


# --------------------------------------------------------------------------
# Linear prediction
# --------------------------------------------------------------------------


def autocorrelation(seq, max_lag: int) -> np.ndarray:
    """Biased autocorrelation ``r[t] = sum_k seq[k] * seq[k + t]`` via FFT."""
    seq = np.asarray(seq, dtype=np.float64)
    n = seq.shape[0]
    if not 0 <= max_lag < n:
        raise ValidationError(f"max_lag {max_lag} must be in [0, {n})")
    nfft = scipy.fft.next_fast_len(2 * n - 1, real=True)
    spec = np.fft.rfft(seq, nfft)
    r = np.fft.irfft(spec.real**2 + spec.imag**2, nfft)[: max_lag + 1]
    return r


def levinson_durbin(r, order: int) -> ARModel:
    """Solve the Toeplitz normal equations for an order-``order`` predictor.

    Returns coefficients ``a`` with ``a[0] = 1`` such that the prediction
    error filter is ``sum_k a[k] z^-k``.
    """
    r = np.asarray(r, dtype=np.float64)
    if order < 0 or order >= r.shape[0]:
        raise ValidationError(f"order {order} needs at least {order + 1} lags, got {r.shape[0]}")
    if not r[0] > 0.0:
        raise NumericalError("degenerate autocorrelation: r[0] <= 0")

    a = np.zeros(order + 1)
    a[0] = 1.0
    k = np.zeros(order)
    err = r[0]
    for i in range(1, order + 1):
        acc = r[i] + np.dot(a[1:i], r[i - 1 : 0 : -1])
        ki = -acc / err
        if not np.isfinite(ki) or abs(ki) >= 1.0:
            raise NumericalError(f"ill-conditioned autocorrelation at order {i} (k={ki})")
        a[1 : i + 1] = a[1 : i + 1] + ki * a[i - 1 :: -1][: i]
        k[i - 1] = ki
        err = err * (1.0 - ki * ki)
        if not np.isfinite(err):
            raise NumericalError("ill-conditioned: non-finite prediction error")
    return ARModel(coefficients=a, error_gain=float(err), reflection=k)


def ar_envelope(model: ARModel, num_samples: int) -> np.ndarray:
    """AR power response ``g / |A(exp(-i pi t / M))|^2`` for ``t = 0..M-1``."""
    if num_samples < 1:
        raise ValidationError("num_samples must be >= 1")
    a = np.asarray(model.coefficients, dtype=np.float64)
    if a.shape[0] <= 2 * num_samples:
        spec = np.fft.fft(a, 2 * num_samples)[:num_samples]
    else:
        t = np.arange(num_samples)
        kk = np.arange(a.shape[0])
        spec = np.exp(-1j * np.pi * np.outer(t, kk) / num_samples) @ a
    power = spec.real**2 + spec.imag**2
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        env = model.error_gain / power
    if not np.all(np.isfinite(env)):
        raise NumericalError("unstable model: AR polynomial vanishes on the evaluation grid")
    return env


def hilbert_envelope(x) -> np.ndarray:
    """Squared magnitude of the analytic signal (one-sided spectrum method)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        raise ValidationError("empty input")
    spec = np.fft.fft(x)
    h = np.zeros(n)
    h[0] = 1.0
    if n % 2 == 0:
        h[n // 2] = 1.0
        h[1 : n // 2] = 2.0
    else:
        h[1 : (n + 1) // 2] = 2.0
    analytic = np.fft.ifft(spec * h)
    return analytic.real**2 + analytic.imag**2


# --------------------------------------------------------------------------
# FDLP
# --------------------------------------------------------------------------


_BANK_CACHE: dict = {}


def mel_bank_for(config: FDLPConfig) -> MelWindowBank:
    key = (config.num_bands, config.f_lo, config.f_hi, config.sample_rate, config.segment_samples)
    bank = _BANK_CACHE.get(key)
    if bank is None:
        bank = make_mel_windows(*key)
        _BANK_CACHE[key] = bank
    return bank


def envelope_floor(samples) -> float:
    samples = np.asarray(samples, dtype=np.float64)
    return 1e-10 * (float(np.mean(samples**2)) + 1e-20)


def prepare_segment(samples, config: FDLPConfig, pad: bool = False) -> np.ndarray:
    """One segment as a float array of exactly ``segment_samples`` (zero-padded if ``pad``)."""
    if isinstance(samples, Signal):
        if samples.sample_rate != config.sample_rate:
            raise ValidationError("sample rate does not match FDLP config")
        samples = samples.samples
    x = np.asarray(samples, dtype=np.float64)
    n = config.segment_samples
    if x.ndim != 1 or x.shape[0] == 0:
        raise ValidationError("segment must be a non-empty 1-D array")
    if not np.all(np.isfinite(x)):
        raise ValidationError("segment contains non-finite samples")
    if x.shape[0] == n:
        return x
    if pad and x.shape[0] < n:
        return np.concatenate([x, np.zeros(n - x.shape[0])])
    raise ValidationError(f"segment must have exactly {n} samples, got {x.shape[0]}")


def band_envelope(coeffs, bank: MelWindowBank, band: int, order: int, num_samples: int):
    """AR envelope of one sub-band, or ``None`` if the band carries no energy."""
    a, b = bank.support(band)
    seq = coeffs[a:b] * bank.weights[band]
    lag = min(order, seq.shape[0] - 1)
    r = autocorrelation(seq, lag)
    if not r[0] > 0.0:
        return None
    return ar_envelope(levinson_durbin(r, lag), num_samples)


def fdlp_analyze(samples, config: FDLPConfig = FDLPConfig(), pad: bool = False) -> np.ndarray:
    """Sub-band temporal envelopes of one segment, shape (envelope_samples, num_bands).

    Values are floored at ``envelope_floor(samples)``; silent bands come back
    floor-valued rather than raising.
    """
    x = prepare_segment(samples, config, pad=pad)
    bank = mel_bank_for(config)
    floor = envelope_floor(x)
    coeffs = dct(x)
    out = np.full((config.envelope_samples, config.num_bands), floor)
    for q in range(config.num_bands):
        try:
            env = band_envelope(coeffs, bank, q, config.ar_order, config.envelope_samples)
        except (NumericalError, ValidationError) as exc:
            raise type(exc)(f"band {q}: {exc}") from exc
        if env is not None:
            out[:, q] = np.maximum(env, floor)
    return out
