"""Versioned binary checkpoints for :class:`GainModel`.

Layout (little-endian)::

    b"FDLPGAIN"  u32 version  u32 text_len  text (key=value config echo)
    u32 n_tensors
    per tensor: u32 name_len  name  u32 ndim  u32 dims[ndim]  f64 data[prod(dims)]
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .gain import GainConfig, GainModel

MAGIC = b"FDLPGAIN"
VERSION = 1


def config_echo(model: GainModel, extra: dict | None = None) -> str:
    cfg = model.config
    layers = ",".join(f"{f}x{kt}x{kb}" for f, kt, kb in cfg.conv_layers)
    items = {
        "num_bands": cfg.num_bands,
        "conv_layers": layers,
        "seed": cfg.seed,
        "zero_output": int(cfg.zero_output),
    }
    items.update(extra or {})
    return "".join(f"{k}={v}\n" for k, v in items.items())


def parse_layers(text: str) -> tuple:
    try:
        return tuple(tuple(int(v) for v in item.split("x")) for item in text.split(",") if item)
    except ValueError as exc:
        raise ValidationError(f"bad conv_layers spec {text!r}") from exc


def save_model(model: GainModel, path, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = config_echo(model, extra).encode("utf-8")
    chunks = [MAGIC, struct.pack("<II", VERSION, len(text)), text, struct.pack("<I", len(model.params))]
    for name, arr in model.params.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)) + raw)
        chunks.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    path.write_bytes(b"".join(chunks))
    return path


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ValidationError(f"unexpected end of file at byte {len(self.blob)} (need {self.pos + n})")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_model(path):
    """Returns ``(model, echo)`` where ``echo`` is the config text as a dict."""
    r = _Reader(Path(path).read_bytes())
    if r.take(8) != MAGIC:
        raise ValidationError("bad checkpoint magic at byte 0")
    version = r.u32()
    if version != VERSION:
        raise ValidationError(f"unsupported checkpoint version {version} at byte 8")
    text = r.take(r.u32()).decode("utf-8")
    echo = {}
    for line in text.splitlines():
        k, _, v = line.partition("=")
        echo[k] = v
    params = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        ndim = r.u32()
        shape = tuple(r.u32() for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        params[name] = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(r.blob):
        raise ValidationError(f"trailing data at byte {r.pos}")
    config = GainConfig(
        num_bands=int(echo["num_bands"]),
        conv_layers=parse_layers(echo["conv_layers"]),
        seed=int(echo["seed"]),
        zero_output=bool(int(echo["zero_output"])),
    )
    return GainModel(config, params), echo
