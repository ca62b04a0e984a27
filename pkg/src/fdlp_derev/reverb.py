"""Synthetic reverberation: RIRs with a prescribed T60, convolution, noise, corpora."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.signal

from .audio_io import FULL_SCALE, read_wav, write_wav
from .dsp import Signal
from .errors import ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoomImpulseResponse:
    samples: np.ndarray
    sample_rate: int
    t60: float
    direct_index: int = 0
    split_ms: float = 50.0
    seed: int = 0

    def __len__(self) -> int:
        return self.samples.shape[0]

    def as_signal(self) -> Signal:
        return Signal(self.samples, self.sample_rate)


def synth_rir(t60, sample_rate=16000, duration=None, seed=0, split_ms=50.0) -> RoomImpulseResponse:
    """Exponentially decaying Gaussian noise with a unit direct path, unit energy.

    ``duration`` defaults to ``min(2, max(2 * t60, 0.1))`` seconds.
    """
    if duration is None:
        duration = min(2.0, max(2.0 * t60, 0.1))
    if not t60 > 0:
        raise ValidationError(f"t60 must be positive, got {t60}")
    if t60 > duration:
        raise ValidationError(f"decay exceeds RIR length: t60={t60} > duration={duration}")
    if duration > 2.0:
        raise ValidationError(f"RIR duration {duration} s exceeds 2 s")
    n = int(round(duration * sample_rate))
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(n)
    decay = 10.0 ** (-3.0 * np.arange(n) / (sample_rate * t60))
    h = g * decay
    h[0] = 1.0  # direct path; replacing (not adding) keeps it from cancelling
    h /= math.sqrt(float(np.sum(h**2)))
    return RoomImpulseResponse(h, int(sample_rate), float(t60), 0, float(split_ms), int(seed))


def schroeder_curve(h) -> np.ndarray:
    """Backward-integrated energy decay in dB, normalized to 0 dB at the start."""
    e = np.cumsum(np.asarray(h, dtype=np.float64)[::-1] ** 2)[::-1]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(e / e[0])


def measure_t60(h, sample_rate, lo_db=-5.0, hi_db=-25.0) -> float:
    """T60 from a least-squares line through the Schroeder curve between two levels."""
    edc = schroeder_curve(h)
    idx = np.nonzero((edc <= lo_db) & (edc >= hi_db))[0]
    if idx.size < 2:
        raise ValidationError("decay curve too short to fit")
    t = idx / sample_rate
    slope, _ = np.polyfit(t, edc[idx], 1)
    return -60.0 / slope


def convolve(x: Signal, h) -> Signal:
    """Linear convolution truncated to ``len(x)``."""
    if isinstance(h, RoomImpulseResponse):
        h_rate, hs = h.sample_rate, h.samples
    elif isinstance(h, Signal):
        h_rate, hs = h.sample_rate, h.samples
    else:
        h_rate, hs = x.sample_rate, np.asarray(h, dtype=np.float64)
    if h_rate != x.sample_rate:
        raise ValidationError(f"sample-rate mismatch: {x.sample_rate} vs {h_rate}")
    y = scipy.signal.fftconvolve(x.samples, hs, mode="full")[: len(x)]
    return Signal(y, x.sample_rate)


def split_rir(h: RoomImpulseResponse):
    """Partition ``h`` into early and late parts at ``split_ms``."""
    boundary = int(round(h.split_ms * 1e-3 * h.sample_rate))
    if not 0 <= boundary <= len(h):
        raise ValidationError(f"split at {h.split_ms} ms lies outside the RIR")
    early = h.samples.copy()
    early[boundary:] = 0.0
    late = h.samples.copy()
    late[:boundary] = 0.0
    return (
        RoomImpulseResponse(early, h.sample_rate, h.t60, h.direct_index, h.split_ms, h.seed),
        RoomImpulseResponse(late, h.sample_rate, h.t60, h.direct_index, h.split_ms, h.seed),
    )


def add_noise(r: Signal, snr_db, seed=0) -> Signal:
    """Add white Gaussian noise scaled to hit ``snr_db`` exactly.

    ``snr_db = inf`` returns the input unchanged.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return r
    if not math.isfinite(snr_db):
        raise ValidationError(f"snr_db must be finite or +inf, got {snr_db}")
    p_sig = float(np.sum(r.samples**2))
    if p_sig == 0.0:
        raise ValidationError("undefined SNR: silent input")
    noise = np.random.default_rng(seed).standard_normal(len(r))
    noise *= math.sqrt(p_sig / (float(np.sum(noise**2)) * 10.0 ** (snr_db / 10.0)))
    return Signal(r.samples + noise, r.sample_rate)


def measure_snr(clean, noisy) -> float:
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(noisy, dtype=np.float64) - clean
    return 10.0 * math.log10(float(np.sum(clean**2)) / float(np.sum(noise**2)))


# --------------------------------------------------------------------------
# Corpus building
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    clean_path: Path
    seed: int
    t60: float
    snr_db: float
    out_path: Path
    line: int = 0


@dataclass
class CorpusManifest:
    entries: list = field(default_factory=list)
    seed: int = 0


def parse_manifest(text: str, base_dir=None, seed: int = 0) -> CorpusManifest:
    """Parse ``clean_path,seed,t60_s,snr_db,out_path`` lines; ``#`` starts a comment."""
    base = Path(base_dir) if base_dir is not None else None
    entries = []
    seen: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 5:
            raise ValidationError(f"manifest line {lineno}: expected 5 fields, got {len(parts)}")
        try:
            entry_seed = int(parts[1])
            t60 = float(parts[2])
            snr = float(parts[3])
        except ValueError as exc:
            raise ValidationError(f"manifest line {lineno}: {exc}") from exc
        if not 0.0 < t60 <= 2.0:
            raise ValidationError(f"manifest line {lineno}: t60 must be in (0, 2], got {t60}")
        if math.isnan(snr) or snr == -math.inf:
            raise ValidationError(f"manifest line {lineno}: snr_db must be finite, got {snr}")
        clean = Path(parts[0])
        out = Path(parts[4])
        if base is not None:
            clean = clean if clean.is_absolute() else base / clean
        key = str(out)
        if key in seen:
            raise ValidationError(f"manifest line {lineno}: path collision with line {seen[key]}: {out}")
        seen[key] = lineno
        entries.append(ManifestEntry(clean, entry_seed, t60, snr, out, lineno))
    return CorpusManifest(entries, seed)


def entry_noise_seed(global_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([global_seed, index]).generate_state(1)[0])


def rir_paths(out_path: Path):
    stem = out_path.with_suffix("")
    return stem.with_name(stem.name + ".rir.wav"), stem.with_name(stem.name + ".rir.meta")


def write_rir(h: RoomImpulseResponse, wav_path: Path) -> Path:
    """Write the RIR as 16-bit WAV scaled to full scale, with a ``.meta`` sidecar."""
    peak = float(np.max(np.abs(h.samples)))
    scale = (32767.0 / FULL_SCALE) / peak if peak > 0 else 1.0
    write_wav(wav_path, Signal(h.samples * scale, h.sample_rate))
    meta = wav_path.with_suffix(".meta")
    meta.write_text(
        f"t60={h.t60!r}\nseed={h.seed}\nsplit_ms={h.split_ms!r}\nscale={scale!r}\n",
        encoding="utf-8",
    )
    return meta


def read_meta(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


def read_rir(wav_path) -> RoomImpulseResponse:
    wav_path = Path(wav_path)
    meta = read_meta(wav_path.with_suffix(".meta"))
    sig = read_wav(wav_path)
    return RoomImpulseResponse(
        sig.samples / float(meta["scale"]),
        sig.sample_rate,
        float(meta["t60"]),
        0,
        float(meta["split_ms"]),
        int(meta["seed"]),
    )


def simulate_entry(entry: ManifestEntry, index: int, global_seed: int, out_dir: Path):
    clean = read_wav(entry.clean_path)
    h = synth_rir(entry.t60, clean.sample_rate, seed=entry.seed)
    r = convolve(clean, h)
    if math.isfinite(entry.snr_db):
        r = add_noise(r, entry.snr_db, seed=entry_noise_seed(global_seed, index))
    out = entry.out_path if entry.out_path.is_absolute() else out_dir / entry.out_path
    # Keep the written file inside 16-bit range; the gain goes in the RIR sidecar.
    peak = float(np.max(np.abs(r.samples)))
    out_gain = 0.99 / peak if peak > 0.99 else 1.0
    write_wav(out, Signal(r.samples * out_gain, r.sample_rate))
    rir_wav, _ = rir_paths(out)
    meta = write_rir(h, rir_wav)
    with meta.open("a", encoding="utf-8") as f:
        f.write(f"snr_db={entry.snr_db!r}\nout_gain={out_gain!r}\n")
    return out, rir_wav


def build_corpus(manifest: CorpusManifest, out_dir, jobs: int = 1):
    """Simulate every manifest entry; failures are collected, not raised.

    Returns ``(written, failures)`` where ``written`` is a list of
    ``(clean, reverberant, rir)`` paths and ``failures`` a list of
    ``(entry, message)``.  Both are ordered by manifest position.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run(item):
        i, entry = item
        try:
            out, rir = simulate_entry(entry, i, manifest.seed, out_dir)
            return i, (entry.clean_path, out, rir), None
        except (OSError, ValueError, ArithmeticError) as exc:
            log.info("entry %d (%s) failed: %s", i, entry.clean_path, exc)
            return i, None, f"{entry.clean_path}: {exc}"

    items = list(enumerate(manifest.entries))
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(run, items))
    else:
        results = [run(item) for item in items]

    written, failures = [], []
    for i, ok, err in sorted(results, key=lambda r: r[0]):
        if ok is not None:
            written.append(ok)
        else:
            failures.append((manifest.entries[i], err))
    # paths in the index are relative to out_dir so the corpus can be moved
    def rel(p):
        return os.path.relpath(Path(p).resolve(), out_dir.resolve())

    index = out_dir / "pairs.txt"
    index.write_text(
        "".join(f"{rel(c)},{rel(r)},{rel(h)}\n" for c, r, h in written),
        encoding="utf-8",
    )
    return written, failures
