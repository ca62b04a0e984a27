"""``key=value`` run configuration shared by all CLI subcommands."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

from .checkpoint import parse_layers
from .dsp import FDLPConfig
from .errors import ValidationError
from .gain import GainConfig


@dataclass
class Config:
    sample_rate: int = 16000
    num_bands: int = 36
    f_lo: float = 200.0
    f_hi: float = 6500.0
    ar_order: int = 160
    split_ms: float = 50.0
    t60_grid: tuple = (0.2, 0.4, 0.6)
    train_t60: float = 0.5
    snr_db: float = math.inf
    conv_layers: tuple = ((8, 5, 3), (8, 5, 3))
    lr: float = 3e-3
    epochs: int = 20
    batch: int = 4
    joint_lr: float = 1e-4
    joint_epochs: int = 5
    val_fraction: float = 0.1
    seed: int = 0
    verify_segments: int = 30
    verify_epochs: int = 12
    out_dir: str = "."

    def fdlp(self) -> FDLPConfig:
        return FDLPConfig(
            sample_rate=self.sample_rate,
            num_bands=self.num_bands,
            f_lo=self.f_lo,
            f_hi=self.f_hi,
            ar_order=self.ar_order,
        )

    def gain(self) -> GainConfig:
        return GainConfig(num_bands=self.num_bands, conv_layers=self.conv_layers, seed=self.seed)

    def validate(self) -> None:
        for name, (ok, msg) in _FIELD_CHECKS.items():
            if not ok(getattr(self, name)):
                raise ValidationError(f"{name}: {msg}")
        if not self.f_lo < self.f_hi <= self.sample_rate / 2:
            raise ValidationError(f"need f_lo < f_hi <= Nyquist, got {self.f_lo}, {self.f_hi}")


def _valid_layers(layers) -> bool:
    GainConfig(conv_layers=layers)
    return len(layers) > 0


_FIELD_CHECKS = {
    "sample_rate": (lambda v: v > 0, "must be > 0"),
    "num_bands": (lambda v: v >= 1, "must be >= 1"),
    "f_lo": (lambda v: v > 0, "must be > 0"),
    "ar_order": (lambda v: v >= 1, "must be >= 1"),
    "split_ms": (lambda v: v >= 0, "must be >= 0"),
    "t60_grid": (lambda v: len(v) > 0 and all(0 < t <= 2 for t in v), "t60 values must be in (0, 2]"),
    "train_t60": (lambda v: 0 < v <= 2, "t60 must be in (0, 2]"),
    "snr_db": (lambda v: not math.isnan(v) and v > -math.inf, "must be finite or inf"),
    "conv_layers": (_valid_layers, "need at least one layer"),
    "lr": (lambda v: v >= 0, "must be >= 0"),
    "joint_lr": (lambda v: v >= 0, "must be >= 0"),
    "epochs": (lambda v: v >= 0, "must be >= 0"),
    "joint_epochs": (lambda v: v >= 0, "must be >= 0"),
    "batch": (lambda v: v >= 1, "must be >= 1"),
    "val_fraction": (lambda v: 0 <= v < 1, "must be in [0, 1)"),
    "verify_segments": (lambda v: v >= 2, "must be >= 2"),
    "verify_epochs": (lambda v: v >= 0, "must be >= 0"),
}


def _convert(name: str, kind, text: str):
    if name == "conv_layers":
        return parse_layers(text)
    if name == "t60_grid":
        return tuple(float(v) for v in text.split(",") if v.strip())
    if kind is int or kind == "int":
        return int(text)
    if kind is float or kind == "float":
        return float(text)
    return text


def parse_config(text: str, base: Config | None = None) -> Config:
    """Parse ``key=value`` lines over ``base``; unknown keys and bad values raise."""
    cfg = dataclasses.replace(base) if base is not None else Config()
    kinds = {f.name: f.type for f in dataclasses.fields(Config)}
    last = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ValidationError(f"config line {lineno}: expected key=value")
        if key not in kinds:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        try:
            converted = _convert(key, kinds[key], value)
            check = _FIELD_CHECKS.get(key)
            if check is not None and not check[0](converted):
                raise ValidationError(check[1])
        except (ValueError, ValidationError) as exc:
            raise ValidationError(f"config line {lineno}: bad value for {key}: {exc}") from exc
        setattr(cfg, key, converted)
        last = lineno
    try:
        cfg.validate()
    except ValidationError as exc:
        raise ValidationError(f"config line {last}: {exc}") from exc
    return cfg


def load_config(path=None, overrides: dict | None = None) -> Config:
    cfg = Config()
    if path is not None:
        cfg = parse_config(Path(path).read_text(encoding="utf-8"), cfg)
    for k, v in (overrides or {}).items():
        if v is not None:
            setattr(cfg, k, v)
    cfg.validate()
    return cfg
