"""Minimal reverse-mode differentiation for the gain network.

Only the handful of array ops the network and the feature chain need are
supported.  Each op computes its value eagerly and records a closure that
pushes the output gradient back to its inputs.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ValidationError


class Var:
    __slots__ = ("value", "grad", "requires_grad", "name")

    def __init__(self, value, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g


class Tape:
    """Records ops between a forward pass and a single backward pass."""

    def __init__(self):
        self._ops: list[tuple[Var, Callable]] = []
        self.loss: Var | None = None
        self.replay: Callable[[], float] | None = None
        self.params: dict[str, Var] = {}
        self.features: np.ndarray | None = None
        self.masks: list[np.ndarray] = []
        self.consumed = False

    def record(self, out: Var, backward: Callable) -> Var:
        out.requires_grad = True
        self._ops.append((out, backward))
        return out

    def param(self, name, value) -> Var:
        v = Var(value, requires_grad=True, name=name)
        self.params[name] = v
        return v


def backward(tape: Tape) -> dict[str, np.ndarray]:
    """Gradients of ``tape.loss`` for every parameter registered on the tape."""
    if tape.consumed:
        raise ValidationError("tape already consumed by a previous backward pass")
    if tape.loss is None:
        raise ValidationError("tape has no recorded loss")
    tape.consumed = True
    tape.loss.grad = np.ones_like(tape.loss.value)
    for out, fn in reversed(tape._ops):
        if out.grad is not None:
            fn(out.grad)
    return {
        name: (v.grad if v.grad is not None else np.zeros_like(v.value))
        for name, v in tape.params.items()
    }


# --------------------------------------------------------------------------
# Ops
# --------------------------------------------------------------------------


def _im2col(x: np.ndarray, kt: int, kb: int) -> np.ndarray:
    """(C, T, B) -> (C*kt*kb, T*B) patches of the zero-padded input."""
    c, t, nb = x.shape
    xp = np.pad(x, ((0, 0), (kt // 2, kt // 2), (kb // 2, kb // 2)))
    windows = sliding_window_view(xp, (kt, kb), axis=(1, 2))  # (C, T, B, kt, kb)
    return windows.transpose(0, 3, 4, 1, 2).reshape(c * kt * kb, t * nb)


def conv2d(tape: Tape, x: Var, w: Var, b: Var) -> Var:
    """Zero-padded 'same' convolution (cross-correlation).

    ``x`` is (C_in, T, B), ``w`` is (C_out, C_in, kt, kb) with odd kernel
    sides, ``b`` is (C_out,).  Output is (C_out, T, B).
    """
    c_out, c_in, kt, kb = w.shape
    c, t, nb = x.shape
    if c != c_in:
        raise ValidationError(f"conv input has {c} channels, kernel expects {c_in}")
    cols = _im2col(x.value, kt, kb)
    wm = w.value.reshape(c_out, -1)
    y = Var((wm @ cols + b.value[:, None]).reshape(c_out, t, nb))

    def back(g):
        gm = g.reshape(c_out, t * nb)
        w.accumulate((gm @ cols.T).reshape(w.shape))
        b.accumulate(gm.sum(axis=1))
        if x.requires_grad:
            # Input gradient is a same-convolution of g with the flipped, transposed kernel.
            w_flip = w.value[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c_in, -1)
            x.accumulate((w_flip @ _im2col(g, kt, kb)).reshape(c_in, t, nb))

    return tape.record(y, back)


def relu(tape: Tape, x: Var) -> Var:
    mask = x.value > 0.0
    tape.masks.append(mask)
    y = Var(np.where(mask, x.value, 0.0))

    def back(g):
        x.accumulate(np.where(mask, g, 0.0))

    return tape.record(y, back)


def frame_affine(tape: Tape, h: Var, w: Var, b: Var) -> Var:
    """Per-frame affine map: (C, T, B) -> (T, out) with ``w`` of shape (C*B, out)."""
    c, t, nb = h.shape
    flat = h.value.transpose(1, 0, 2).reshape(t, c * nb)
    y = Var(flat @ w.value + b.value)

    def back(g):
        w.accumulate(flat.T @ g)
        b.accumulate(g.sum(axis=0))
        if h.requires_grad:
            h.accumulate((g @ w.value.T).reshape(t, c, nb).transpose(1, 0, 2))

    return tape.record(y, back)


def add_const(tape: Tape, x: Var, const) -> Var:
    y = Var(x.value + const)
    return tape.record(y, x.accumulate)


def exp(tape: Tape, x: Var) -> Var:
    val = np.exp(x.value)
    y = Var(val)

    def back(g):
        x.accumulate(g * val)

    return tape.record(y, back)


def log(tape: Tape, x: Var) -> Var:
    if not np.all(x.value > 0):
        raise ValidationError("log of non-positive value")
    y = Var(np.log(x.value))

    def back(g):
        x.accumulate(g / x.value)

    return tape.record(y, back)


def fixed_linear(tape: Tape, x: Var, operator) -> Var:
    """Frozen linear layer along axis 0; ``operator`` has ``apply``/``transpose_apply``."""
    n = x.shape[0]
    y = Var(operator.apply(x.value))

    def back(g):
        x.accumulate(operator.transpose_apply(g, n))

    return tape.record(y, back)


def mse(tape: Tape, pred: Var, target, valid_rows=None) -> Var:
    """Mean squared error over the first ``valid_rows`` rows (all rows by default)."""
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValidationError(f"shape mismatch: {pred.shape} vs {target.shape}")
    rows = pred.shape[0] if valid_rows is None else int(valid_rows)
    diff = np.zeros_like(target)
    diff[:rows] = pred.value[:rows] - target[:rows]
    count = rows * int(np.prod(pred.shape[1:]))
    y = Var(np.sum(diff**2) / count)

    def back(g):
        pred.accumulate(g * 2.0 * diff / count)

    return tape.record(y, back)
