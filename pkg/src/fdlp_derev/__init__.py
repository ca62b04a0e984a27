"""FDLP sub-band envelopes, envelope-domain reverberation and gain-based dereverberation."""

from .dsp import FDLPConfig, Signal, fdlp_analyze
from .envelope import apply_gain, residual_target
from .features import baseline_logmel, fdlp_features, integrate
from .gain import GainConfig, GainModel, init_model, joint_finetune, train

__version__ = "0.1.0"

__all__ = [
    "FDLPConfig",
    "Signal",
    "fdlp_analyze",
    "apply_gain",
    "residual_target",
    "baseline_logmel",
    "fdlp_features",
    "integrate",
    "GainConfig",
    "GainModel",
    "init_model",
    "train",
    "joint_finetune",
]
