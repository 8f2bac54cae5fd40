"""
Classifier-free denoiser training.

Each sample draws a step k, Gaussian noise and a Bernoulli(p_uncond) flag that swaps
its condition for the null token; the loss is the batch mean of ||eps - eps_hat||^2.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..datagen import Dataset
from ..neural import adam_step, init_adam
from ..ocp import OcpSpec
from ..utils.fields import IntList
from .denoiser import Denoiser, NoisePredictor, Normalizer, build_denoiser
from .schedule import (
    DEFAULT_BETA_MAX,
    DEFAULT_BETA_MIN,
    DEFAULT_MAX_TERMINAL_ALPHA,
    NoiseSchedule,
    ReverseVariance,
    ScheduleKind,
    forward_noising,
    make_schedule,
)

logger = logging.getLogger(__name__)


class TrainingDiverged(ArithmeticError):
    """Raised when a training loss becomes non-finite."""
    pass


class DiffusionTrainConfig(BaseModel):
    """Optimizer, schedule and architecture settings for denoiser training."""
    model_config = ConfigDict(frozen=True)

    batch_size: int = Field(default=4096, ge=1)
    epochs: int = Field(default=300, ge=1)
    learning_rate: float = Field(default=3e-3, gt=0.0)
    p_uncond: float = Field(default=0.25, ge=0.0, le=1.0)
    diffusion_steps: int = Field(default=25, ge=1)
    schedule: ScheduleKind = ScheduleKind.LINEAR
    beta_min: float = Field(default=DEFAULT_BETA_MIN, gt=0.0, lt=1.0)
    beta_max: float = Field(default=DEFAULT_BETA_MAX, gt=0.0, lt=1.0)
    variance: ReverseVariance = ReverseVariance.BETA
    seed: int = 0
    validation_fraction: float = Field(default=0.05, gt=0.0, lt=1.0)
    hidden_widths: IntList = Field(default_factory=lambda: [256, 256, 256])
    step_embedding_dim: int = Field(default=32, ge=2)
    cond_embedding_dim: int = Field(default=32, ge=1)

    @model_validator(mode="after")
    def _check_betas(self) -> "DiffusionTrainConfig":
        if self.beta_min > self.beta_max:
            raise ValueError("beta_min must not exceed beta_max")
        return self

    def schedule_config(self) -> dict:
        return {
            "steps": self.diffusion_steps,
            "kind": self.schedule.value,
            "beta_min": self.beta_min,
            "beta_max": self.beta_max,
            "variance": self.variance.value,
        }

    def build_schedule(self) -> NoiseSchedule:
        """Schedule for training; the default linear endpoints get the terminal-alpha check."""
        is_default = (self.schedule is ScheduleKind.LINEAR
                      and self.beta_min == DEFAULT_BETA_MIN and self.beta_max == DEFAULT_BETA_MAX)
        return make_schedule(
            self.diffusion_steps, self.schedule, self.beta_min, self.beta_max, self.variance,
            max_terminal_alpha=DEFAULT_MAX_TERMINAL_ALPHA if is_default else None,
        )


@dataclass
class LossReport:
    """
    One loss evaluation.

    `uncond` records which rows used the null token; `gradients` is filled only when
    the predictor is a trainable Denoiser.
    """
    loss: float
    steps: np.ndarray
    noise: np.ndarray
    uncond: np.ndarray
    gradients: Optional[List[np.ndarray]] = None


@dataclass
class TrainResult:
    denoiser: Denoiser
    log: List[Tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = 0
    best_validation_loss: float = float("inf")


def training_loss(
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
    states: np.ndarray,
    sequences: np.ndarray,
    p_uncond: float,
    rng: np.random.Generator,
    with_gradients: bool = True,
) -> LossReport:
    """
    Classifier-free denoising loss on a normalized batch.

    Args:
        predictor: Noise predictor (a Denoiser for gradients)
        schedule: Training schedule
        states: Normalized conditions (B, n_x)
        sequences: Normalized flattened sequences (B, H*n_u)
        p_uncond: Probability of replacing the condition with the null token
        rng: Random stream for steps, noise and condition dropout (drawn in that order)
        with_gradients: Compute parameter gradients when the predictor supports it

    Returns:
        LossReport

    Raises:
        TrainingDiverged: If the loss is not finite
    """
    batch = sequences.shape[0]
    steps = rng.integers(1, schedule.steps + 1, size=batch)
    noise = rng.standard_normal(sequences.shape)
    uncond = rng.random(batch) < p_uncond
    noisy = forward_noising(schedule, sequences, steps, noise)

    gradients = None
    if with_gradients and isinstance(predictor, Denoiser):
        predicted, cache = predictor.predict_with_cache(noisy, steps, states, uncond)
        residual = noise - predicted
        gradients = predictor.gradients(cache, -2.0 * residual / batch)
    else:
        residual = noise - predictor.predict(noisy, steps, states, uncond)

    loss = float(np.mean(np.sum(residual**2, axis=1)))
    if not np.isfinite(loss):
        raise TrainingDiverged("Non-finite denoising loss")
    return LossReport(loss, steps, noise, uncond, gradients)


def _flatten(ds: Dataset, normalizer: Normalizer, rows: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    states = normalizer.normalize_state(ds.states[rows])
    seqs = normalizer.normalize_sequence(ds.sequences[rows]).reshape(len(rows), -1)
    return states, seqs


def split_indices(count: int, fraction: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Shuffled (train, validation) split; a single record serves as both."""
    order = rng.permutation(count)
    if count < 2:
        return order, order
    n_val = min(count - 1, max(1, int(round(count * fraction))))
    return order[n_val:], order[:n_val]


def train(ds: Dataset, spec: OcpSpec, cfg: DiffusionTrainConfig) -> TrainResult:
    """
    Train a denoiser on a dataset and keep the best-validation parameters.

    Args:
        ds: Dataset of (state, sequence) records
        spec: OCP whose input box defines the sequence normalization
        cfg: Training settings

    Returns:
        TrainResult with the selected denoiser and (epoch, train loss, validation loss) rows

    Raises:
        ValueError: If the dataset is empty
        TrainingDiverged: If a loss becomes non-finite
    """
    if len(ds) == 0:
        raise ValueError("Cannot train on an empty dataset")

    rng = np.random.default_rng(cfg.seed)
    train_rows, val_rows = split_indices(len(ds), cfg.validation_fraction, rng)
    normalizer = Normalizer.fit(ds.states[train_rows], spec.box)
    schedule = cfg.build_schedule()
    horizon, n_u = ds.sequences.shape[1], ds.sequences.shape[2]
    denoiser = build_denoiser(
        ds.states.shape[1], horizon, n_u, schedule, normalizer, rng,
        hidden=list(cfg.hidden_widths), step_dim=cfg.step_embedding_dim,
        cond_dim=cfg.cond_embedding_dim, schedule_config=cfg.schedule_config(),
    )

    train_states, train_seqs = _flatten(ds, normalizer, train_rows)
    val_states, val_seqs = _flatten(ds, normalizer, val_rows)
    batch_size = min(cfg.batch_size, len(train_rows))
    arrays = denoiser.arrays()
    adam = init_adam(arrays, cfg.learning_rate)

    result = TrainResult(denoiser=denoiser)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_rows))
        total, seen = 0.0, 0
        for start in range(0, len(order), batch_size):
            rows = order[start:start + batch_size]
            report = training_loss(denoiser, schedule, train_states[rows], train_seqs[rows],
                                   cfg.p_uncond, rng)
            arrays, adam = adam_step(adam, arrays, report.gradients)
            denoiser = denoiser.with_arrays(arrays)
            total += report.loss * len(rows)
            seen += len(rows)
        train_loss = total / seen

        val_rng = np.random.default_rng([cfg.seed, 1])
        val_loss = training_loss(denoiser, schedule, val_states, val_seqs, cfg.p_uncond,
                                 val_rng, with_gradients=False).loss
        result.log.append((epoch, train_loss, val_loss))
        if val_loss < result.best_validation_loss:
            result.best_validation_loss = val_loss
            result.best_epoch = epoch
            result.denoiser = denoiser.with_arrays([a.copy() for a in arrays])
        logger.info("Epoch %d/%d train %.5f val %.5f", epoch, cfg.epochs, train_loss, val_loss)

    return result
