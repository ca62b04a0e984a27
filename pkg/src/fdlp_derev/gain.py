"""Envelope-gain network, Adam, and training loops.

The network maps a (time, band) reverberant log-envelope to a log-domain
gain of the same shape: a stack of zero-padded 2-D convolutions with ReLU,
then a per-frame affine map from all channels and bands to one output per
band.  ``joint_forward`` continues the chain through gain application,
exponentiation, the frozen integration layer and log compression, so the
network can be fine-tuned against a feature-domain loss.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ValidationError
from .features import DEFAULT_OPERATOR, IntegrationOperator


@dataclass(frozen=True)
class GainConfig:
    num_bands: int = 36
    conv_layers: tuple = ((8, 5, 3), (8, 5, 3))  # (filters, kernel_time, kernel_band)
    seed: int = 0
    zero_output: bool = False

    def __post_init__(self):
        for filters, kt, kb in self.conv_layers:
            if filters < 1 or kt % 2 == 0 or kb % 2 == 0:
                raise ValidationError(f"conv layer ({filters}, {kt}, {kb}): kernel sides must be odd")


@dataclass
class GainModel:
    config: GainConfig
    params: dict

    @property
    def num_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy(self) -> "GainModel":
        return GainModel(self.config, {k: v.copy() for k, v in self.params.items()})


def init_model(config: GainConfig = GainConfig()) -> GainModel:
    """Uniform +-1/sqrt(fan_in) initialization from ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    params = {}
    c_in = 1
    for i, (filters, kt, kb) in enumerate(config.conv_layers):
        bound = 1.0 / np.sqrt(c_in * kt * kb)
        params[f"conv{i}.weight"] = rng.uniform(-bound, bound, (filters, c_in, kt, kb))
        params[f"conv{i}.bias"] = rng.uniform(-bound, bound, filters)
        c_in = filters
    fan_in = c_in * config.num_bands
    bound = 1.0 / np.sqrt(fan_in)
    if config.zero_output:
        params["out.weight"] = np.zeros((fan_in, config.num_bands))
        params["out.bias"] = np.zeros(config.num_bands)
    else:
        params["out.weight"] = rng.uniform(-bound, bound, (fan_in, config.num_bands))
        params["out.bias"] = rng.uniform(-bound, bound, config.num_bands)
    return GainModel(config, params)


def _check_input(model: GainModel, log_reverb) -> np.ndarray:
    x = np.asarray(log_reverb, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.config.num_bands:
        raise ValidationError(f"expected (time, {model.config.num_bands}) input, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("input contains non-finite values")
    return x


def _network(tape: ad.Tape, model: GainModel, x: np.ndarray) -> ad.Var:
    # Per-segment mean removal makes the gain invariant to overall signal level.
    h = ad.Var((x - x.mean())[None])
    for i in range(len(model.config.conv_layers)):
        w = tape.param(f"conv{i}.weight", model.params[f"conv{i}.weight"])
        b = tape.param(f"conv{i}.bias", model.params[f"conv{i}.bias"])
        h = ad.relu(tape, ad.conv2d(tape, h, w, b))
    w = tape.param("out.weight", model.params["out.weight"])
    b = tape.param("out.bias", model.params["out.bias"])
    return ad.frame_affine(tape, h, w, b)


def forward(model: GainModel, log_reverb, tape: ad.Tape | None = None) -> np.ndarray:
    """Predicted log-domain gain, same shape as ``log_reverb``."""
    x = _check_input(model, log_reverb)
    return _network(tape if tape is not None else ad.Tape(), model, x).value


def mse_loss(pred, target, valid_rows=None) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValidationError(f"shape mismatch: {pred.shape} vs {target.shape}")
    rows = pred.shape[0] if valid_rows is None else int(valid_rows)
    return float(np.mean((pred[:rows] - target[:rows]) ** 2))


def gain_tape(model: GainModel, log_reverb, target, valid_rows=None) -> ad.Tape:
    """Forward pass plus MSE against ``target``, recorded for :func:`backward`."""
    x = _check_input(model, log_reverb)
    tape = ad.Tape()
    pred = _network(tape, model, x)
    tape.loss = ad.mse(tape, pred, target, valid_rows)
    tape.replay = lambda: float(gain_tape(model, x, target, valid_rows).loss.value)
    return tape


def clean_features(clean_env, operator: IntegrationOperator = DEFAULT_OPERATOR) -> np.ndarray:
    return np.log(operator.apply(np.asarray(clean_env, dtype=np.float64)))


def feature_chain(tape: ad.Tape, gain: ad.Var, log_reverb, clean_feats, valid_frames=None,
                  operator: IntegrationOperator = DEFAULT_OPERATOR) -> ad.Var:
    """Record apply -> exp -> integrate -> log -> MSE; sets ``tape.loss`` and ``tape.features``."""
    est_log = ad.add_const(tape, gain, log_reverb)
    energies = ad.fixed_linear(tape, ad.exp(tape, est_log), operator)
    feats = ad.log(tape, energies)
    tape.loss = ad.mse(tape, feats, clean_feats, valid_frames)
    tape.features = feats.value
    return tape.loss


def joint_tape(
    model: GainModel,
    log_reverb,
    clean_feats,
    valid_frames=None,
    operator: IntegrationOperator = DEFAULT_OPERATOR,
) -> ad.Tape:
    """Gain -> apply -> exp -> integrate -> log -> MSE against clean features."""
    x = _check_input(model, log_reverb)
    tape = ad.Tape()
    feature_chain(tape, _network(tape, model, x), x, clean_feats, valid_frames, operator)
    tape.replay = lambda: float(joint_tape(model, x, clean_feats, valid_frames, operator).loss.value)
    return tape


def joint_forward(model: GainModel, log_reverb, clean_feats, valid_frames=None,
                  operator: IntegrationOperator = DEFAULT_OPERATOR):
    """Returns ``(features, loss, tape)`` for the full differentiable chain."""
    tape = joint_tape(model, log_reverb, clean_feats, valid_frames, operator)
    return tape.features, float(tape.loss.value), tape


backward = ad.backward


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict) -> dict:
    """One bias-corrected Adam update; returns new parameter arrays."""
    if set(params) != set(grads):
        raise ValidationError("parameter and gradient names differ")
    state.step += 1
    t = state.step
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValidationError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        out[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Example:
    """One 2 s segment: reverberant log-envelope, gain target, clean features."""

    log_reverb: np.ndarray
    target: np.ndarray
    clean_feats: np.ndarray
    valid_rows: int | None = None
    valid_frames: int | None = None


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    initial_train_loss: float = float("nan")
    initial_val_loss: float = float("nan")

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,seconds"]
        lines.append(f"0,{self.initial_train_loss!r},{self.initial_val_loss!r},0.0")
        for i, (a, b, s) in enumerate(zip(self.train_loss, self.val_loss, self.seconds), start=1):
            lines.append(f"{i},{a!r},{b!r},{s:.3f}")
        return "\n".join(lines) + "\n"


def split_indices(n: int, seed: int, val_fraction: float = 0.1):
    """Seeded 90/10 split; at least one held-out item when ``n >= 2``."""
    if n < 1:
        raise ValidationError("empty corpus")
    perm = np.random.default_rng([seed, 1]).permutation(n)
    n_val = int(round(n * val_fraction))
    if n >= 2:
        n_val = max(1, n_val)
    n_val = min(n_val, n - 1)
    return sorted(perm[n_val:].tolist()), sorted(perm[:n_val].tolist())


def _make_tape(model, ex: Example, joint: bool, operator):
    if joint:
        return joint_tape(model, ex.log_reverb, ex.clean_feats, ex.valid_frames, operator)
    return gain_tape(model, ex.log_reverb, ex.target, ex.valid_rows)


def evaluate(model: GainModel, examples, joint: bool = False, operator=DEFAULT_OPERATOR) -> float:
    """Mean per-segment loss (gain MSE, or feature MSE when ``joint``)."""
    if not examples:
        return float("nan")
    return float(np.mean([float(_make_tape(model, ex, joint, operator).loss.value) for ex in examples]))


def batch_gradients(model: GainModel, batch, joint: bool = False, operator=DEFAULT_OPERATOR):
    """Average of per-segment gradients, summed in batch order."""
    total = None
    loss = 0.0
    for ex in batch:
        tape = _make_tape(model, ex, joint, operator)
        loss += float(tape.loss.value)
        grads = backward(tape)
        if total is None:
            total = grads
        else:
            for k in total:
                total[k] = total[k] + grads[k]
    n = len(batch)
    return loss / n, {k: v / n for k, v in total.items()}


def _fit(model, train_set, val_set, epochs, batch, seed, lr, joint, operator):
    model = model.copy()
    state = AdamState(lr=lr)
    report = TrainReport(
        initial_train_loss=evaluate(model, train_set, joint, operator),
        initial_val_loss=evaluate(model, val_set, joint, operator),
    )
    for epoch in range(epochs):
        t0 = time.perf_counter()
        order = np.random.default_rng([seed, 2, epoch]).permutation(len(train_set))
        for start in range(0, len(order), batch):
            chunk = [train_set[i] for i in order[start : start + batch]]
            _, grads = batch_gradients(model, chunk, joint, operator)
            model.params = adam_step(state, model.params, grads)
        report.train_loss.append(evaluate(model, train_set, joint, operator))
        report.val_loss.append(evaluate(model, val_set, joint, operator))
        report.seconds.append(time.perf_counter() - t0)
    return model, report


def train(model: GainModel, corpus, epochs=20, batch=4, seed=0, lr=1e-3, val=None):
    """Adam on the gain MSE.  Without ``val`` a seeded 90/10 split is used."""
    corpus = list(corpus)
    if not corpus:
        raise ValidationError("empty corpus")
    if val is None:
        tr, va = split_indices(len(corpus), seed)
        train_set, val_set = [corpus[i] for i in tr], [corpus[i] for i in va]
    else:
        train_set, val_set = corpus, list(val)
    return _fit(model, train_set, val_set, epochs, batch, seed, lr, False, DEFAULT_OPERATOR)


def joint_finetune(model: GainModel, corpus, epochs=5, batch=4, seed=0, lr=1e-4, val=None,
                   operator: IntegrationOperator = DEFAULT_OPERATOR):
    """Fine-tune through the frozen feature chain against clean features."""
    corpus = list(corpus)
    if not corpus:
        raise ValidationError("empty corpus")
    if val is None:
        tr, va = split_indices(len(corpus), seed)
        train_set, val_set = [corpus[i] for i in tr], [corpus[i] for i in va]
    else:
        train_set, val_set = corpus, list(val)
    return _fit(model, train_set, val_set, epochs, batch, seed, lr, True, operator)
