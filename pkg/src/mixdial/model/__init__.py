"""Sequence model: network, checkpointing, training schedule, decoding."""

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .net import ModelConfig, ModelConfigError, SequenceModel, build_model
from .training import (
    DivergenceError,
    TaskExample,
    TrainConfig,
    batches_for,
    continual_train,
    train_stage,
)
from .decode import generate

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "DivergenceError",
    "ModelConfig",
    "ModelConfigError",
    "SequenceModel",
    "TaskExample",
    "TrainConfig",
    "batches_for",
    "build_model",
    "continual_train",
    "generate",
    "load_checkpoint",
    "save_checkpoint",
    "train_stage",
]
