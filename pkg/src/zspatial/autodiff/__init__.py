"""Minimal reverse-mode differentiation for training the transceiver through the channel."""

from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .nn import MlpParams, identity_layer, init_mlp, mlp_apply
from .optim import AdamState, adam_step
from .tape import Tape, TapeError, Tensor, gradient_check

__all__ = [
    "AdamState", "MlpParams", "Tape", "TapeError", "Tensor", "adam_step", "gradient_check",
    "identity_layer", "init_mlp", "load_checkpoint", "mlp_apply", "ops", "save_checkpoint",
]
