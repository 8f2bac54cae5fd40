"""
Behavior-cloning baseline: a tanh MLP regressing the full control sequence on the
state with a mean-squared-error loss.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..datagen import Dataset
from ..diffusion import Normalizer, TrainingDiverged, split_indices
from ..dynamics import FloatArray
from ..neural import (
    Activation,
    CheckpointMismatch,
    MlpSpec,
    Parameters,
    adam_step,
    backward,
    forward,
    forward_with_cache,
    init_adam,
    init_parameters,
    load_checkpoint,
    save_checkpoint,
)
from ..ocp import OcpSpec
from ..solver import project_box
from ..utils.fields import IntList

logger = logging.getLogger(__name__)


class BehaviorCloneConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    hidden_widths: IntList = Field(default_factory=lambda: [50, 50, 50])
    activation: Activation = Activation.TANH
    epochs: int = Field(default=300, ge=1)
    batch_size: int = Field(default=1024, ge=1)
    learning_rate: float = Field(default=3e-3, gt=0.0)
    validation_fraction: float = Field(default=0.05, gt=0.0, lt=1.0)
    seed: int = 0


@dataclass
class BehaviorClonePolicy:
    """Direct state -> sequence approximation of the MPC law."""
    spec: MlpSpec
    params: Parameters
    normalizer: Normalizer
    horizon: int
    n_u: int
    log: List[Tuple[int, float, float]] = field(default_factory=list)

    def predict(self, x: np.ndarray) -> FloatArray:
        """Sequence(s) of shape (..., H, n_u) in physical units (not clamped)."""
        x = np.asarray(x, dtype=float)
        out = forward(self.spec, self.params, self.normalizer.normalize_state(x))
        return self.normalizer.denormalize_sequence(out.reshape(x.shape[:-1] + (self.horizon, self.n_u)))

    def predict_feasible(self, x: np.ndarray, spec: OcpSpec) -> FloatArray:
        return project_box(self.predict(x), spec.box)


def _mse(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean(np.sum((pred - target) ** 2, axis=1)))


def train_behavior_clone(ds: Dataset, spec: OcpSpec, cfg: BehaviorCloneConfig) -> BehaviorClonePolicy:
    """
    Fit the regression policy and keep the best-validation parameters.

    The dataset decides which baseline this is: locally optimal targets give NN,
    a budget-matched multistart dataset gives NN*.

    Raises:
        ValueError: If the dataset is empty
        TrainingDiverged: If the loss becomes non-finite
    """
    if len(ds) == 0:
        raise ValueError("Cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    train_rows, val_rows = split_indices(len(ds), cfg.validation_fraction, rng)
    normalizer = Normalizer.fit(ds.states[train_rows], spec.box)
    horizon, n_u = ds.sequences.shape[1], ds.sequences.shape[2]

    def prepare(rows: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return (normalizer.normalize_state(ds.states[rows]),
                normalizer.normalize_sequence(ds.sequences[rows]).reshape(len(rows), -1))

    x_train, y_train = prepare(train_rows)
    x_val, y_val = prepare(val_rows)
    mlp = MlpSpec.uniform(ds.states.shape[1], cfg.hidden_widths, horizon * n_u, cfg.activation)
    params = init_parameters(mlp, rng)
    arrays = params.arrays()
    adam = init_adam(arrays, cfg.learning_rate)
    batch_size = min(cfg.batch_size, len(train_rows))

    best_loss, best_arrays = float("inf"), [a.copy() for a in arrays]
    log: List[Tuple[int, float, float]] = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_rows))
        total = 0.0
        for start in range(0, len(order), batch_size):
            rows = order[start:start + batch_size]
            params = Parameters.from_arrays(arrays)
            pred, cache = forward_with_cache(mlp, params, x_train[rows])
            residual = pred - y_train[rows]
            loss = float(np.mean(np.sum(residual**2, axis=1)))
            if not np.isfinite(loss):
                raise TrainingDiverged(f"Behavior-clone loss diverged in epoch {epoch}")
            grads, _ = backward(mlp, params, None, 2.0 * residual / len(rows), cache)
            arrays, adam = adam_step(adam, arrays, grads.arrays())
            total += loss * len(rows)
        val_loss = _mse(forward(mlp, Parameters.from_arrays(arrays), x_val), y_val)
        log.append((epoch, total / len(order), val_loss))
        if val_loss < best_loss:
            best_loss, best_arrays = val_loss, [a.copy() for a in arrays]
        logger.debug("Behavior clone epoch %d train %.5f val %.5f", epoch, total / len(order), val_loss)

    logger.info("Behavior clone trained, best validation MSE %.5f", best_loss)
    return BehaviorClonePolicy(mlp, Parameters.from_arrays(best_arrays), normalizer, horizon, n_u, log)


def save_policy(path: Union[str, Path], policy: BehaviorClonePolicy, meta: Optional[Dict[str, Any]] = None) -> None:
    save_checkpoint(path, policy.spec, policy.params, {
        "kind": "behavior_clone",
        "horizon": policy.horizon,
        "n_u": policy.n_u,
        "normalizer": policy.normalizer.to_meta(),
        **(meta or {}),
    })


def load_policy(path: Union[str, Path]) -> BehaviorClonePolicy:
    checkpoint = load_checkpoint(path)
    if checkpoint.meta.get("kind") != "behavior_clone":
        raise CheckpointMismatch(f"{path}: not a behavior-clone checkpoint")
    return BehaviorClonePolicy(
        checkpoint.spec,
        checkpoint.params,
        Normalizer.from_meta(checkpoint.meta["normalizer"]),
        int(checkpoint.meta["horizon"]),
        int(checkpoint.meta["n_u"]),
    )
