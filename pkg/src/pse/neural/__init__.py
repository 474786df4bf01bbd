"""Minimal reverse-mode differentiable core for the GRU mask estimator and
the frame-SNR regressor: tape autodiff, model definitions, adaptive-moment
optimizer, and checkpoint I/O."""

from .autodiff import Tensor, backward
from .model import (
    GruConfig,
    ModelParams,
    apply_mask_and_reconstruct,
    features,
    forward_mask,
    forward_snr,
    init_params,
    param_count,
)
from .optim import AdamState, NonFiniteGradientError, optimizer_step
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint

__all__ = [
    "Tensor",
    "backward",
    "GruConfig",
    "ModelParams",
    "apply_mask_and_reconstruct",
    "features",
    "forward_mask",
    "forward_snr",
    "init_params",
    "param_count",
    "AdamState",
    "NonFiniteGradientError",
    "optimizer_step",
    "CheckpointError",
    "load_checkpoint",
    "save_checkpoint",
]
