"""Minimal dense-network engine: forward, backward, Adam, checkpoints."""
from .checkpoint import Checkpoint, CheckpointMismatch, load_checkpoint, save_checkpoint
from .mlp import (
    Activation,
    ForwardCache,
    MlpSpec,
    Parameters,
    ShapeMismatch,
    activate,
    backward,
    check_parameters,
    forward,
    forward_with_cache,
    init_parameters,
)
from .optim import AdamState, NonFiniteGradient, adam_step, init_adam

__all__ = [
    "Activation",
    "AdamState",
    "Checkpoint",
    "CheckpointMismatch",
    "ForwardCache",
    "MlpSpec",
    "NonFiniteGradient",
    "Parameters",
    "ShapeMismatch",
    "activate",
    "adam_step",
    "backward",
    "check_parameters",
    "forward",
    "forward_with_cache",
    "init_adam",
    "init_parameters",
    "load_checkpoint",
    "save_checkpoint",
]
