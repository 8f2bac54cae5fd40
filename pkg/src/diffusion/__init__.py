"""Conditional denoising diffusion over control sequences."""
from .denoiser import (
    Denoiser,
    NoisePredictor,
    Normalizer,
    build_denoiser,
    load_denoiser,
    save_denoiser,
    step_embedding,
)
from .sampling import guided_noise, reverse_step, sample_sequence, sample_sequences
from .schedule import (
    NoiseSchedule,
    ReverseVariance,
    ScheduleKind,
    default_schedule,
    forward_noising,
    make_schedule,
    respace,
)
from .training import (
    DiffusionTrainConfig,
    LossReport,
    TrainingDiverged,
    TrainResult,
    split_indices,
    train,
    training_loss,
)

__all__ = [
    "Denoiser",
    "DiffusionTrainConfig",
    "LossReport",
    "NoisePredictor",
    "NoiseSchedule",
    "Normalizer",
    "ReverseVariance",
    "ScheduleKind",
    "TrainResult",
    "TrainingDiverged",
    "build_denoiser",
    "default_schedule",
    "forward_noising",
    "guided_noise",
    "load_denoiser",
    "make_schedule",
    "respace",
    "reverse_step",
    "sample_sequence",
    "sample_sequences",
    "save_denoiser",
    "split_indices",
    "step_embedding",
    "train",
    "training_loss",
]
