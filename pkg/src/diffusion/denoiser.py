"""
Conditional noise predictor.

The network input is [noisy sequence | sinusoidal step embedding | condition
embedding], where the condition embedding is a linear map of the normalized state
or, for unconditioned rows, a learned null token of the same width.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Tuple, Union

import numpy as np

from ..dynamics import FloatArray
from ..neural import (
    Activation,
    CheckpointMismatch,
    ForwardCache,
    MlpSpec,
    Parameters,
    backward,
    forward_with_cache,
    init_parameters,
    load_checkpoint,
    save_checkpoint,
)
from ..ocp import InputBox
from .schedule import NoiseSchedule, ReverseVariance, ScheduleKind, make_schedule

_SCALE_FLOOR = 1e-8


class NoisePredictor(Protocol):
    """Anything that predicts the injected noise from (u^k, k, condition)."""

    def predict(
        self, u_k: np.ndarray, k: np.ndarray, cond: np.ndarray, uncond: np.ndarray
    ) -> np.ndarray:
        ...


@dataclass
class Normalizer:
    """
    Affine maps between physical and network coordinates.

    States use the training-set mean and standard deviation; sequences map the input
    box onto [-1, 1] entrywise.
    """
    state_mean: FloatArray
    state_scale: FloatArray
    input_lower: FloatArray
    input_upper: FloatArray

    @classmethod
    def fit(cls, states: np.ndarray, box: InputBox) -> "Normalizer":
        states = np.asarray(states, dtype=float)
        scale = states.std(axis=0)
        scale = np.where(scale > _SCALE_FLOOR, scale, 1.0)
        return cls(states.mean(axis=0), scale, box.lower_array, box.upper_array)

    def normalize_state(self, x: np.ndarray) -> FloatArray:
        return (np.asarray(x, dtype=float) - self.state_mean) / self.state_scale

    def denormalize_state(self, z: np.ndarray) -> FloatArray:
        return np.asarray(z, dtype=float) * self.state_scale + self.state_mean

    def normalize_sequence(self, u: np.ndarray) -> FloatArray:
        """(..., H, n_u) physical inputs -> same shape in [-1, 1] for in-box values."""
        width = self.input_upper - self.input_lower
        return 2.0 * (np.asarray(u, dtype=float) - self.input_lower) / width - 1.0

    def denormalize_sequence(self, v: np.ndarray) -> FloatArray:
        width = self.input_upper - self.input_lower
        return (np.asarray(v, dtype=float) + 1.0) * 0.5 * width + self.input_lower

    def to_meta(self) -> Dict[str, List[float]]:
        return {
            "state_mean": self.state_mean.tolist(),
            "state_scale": self.state_scale.tolist(),
            "input_lower": self.input_lower.tolist(),
            "input_upper": self.input_upper.tolist(),
        }

    @classmethod
    def from_meta(cls, meta: Dict[str, List[float]]) -> "Normalizer":
        return cls(*(np.asarray(meta[key], dtype=float)
                     for key in ("state_mean", "state_scale", "input_lower", "input_upper")))


def step_embedding(k: np.ndarray, width: int) -> FloatArray:
    """Sinusoidal embedding of diffusion steps, shape (B, width)."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    half = width // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    angles = k[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
    if width % 2:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=1)
    return emb


@dataclass
class DenoiserCache:
    mlp: ForwardCache
    cond: np.ndarray
    uncond: np.ndarray


@dataclass
class Denoiser:
    """
    Noise predictor eps_theta(u^k, k, x) with its schedule and normalizer.

    `counters` tracks network evaluations and reverse steps for budget accounting.
    """
    spec: MlpSpec
    params: Parameters
    embed_w: FloatArray
    embed_b: FloatArray
    null_token: FloatArray
    schedule: NoiseSchedule
    normalizer: Normalizer
    horizon: int
    n_u: int
    step_dim: int
    schedule_config: Dict[str, Any] = field(default_factory=dict)
    counters: Dict[str, int] = field(default_factory=lambda: {"evaluations": 0, "reverse_steps": 0})

    @property
    def sequence_dim(self) -> int:
        return self.horizon * self.n_u

    @property
    def cond_dim(self) -> int:
        return int(self.null_token.shape[0])

    @property
    def n_x(self) -> int:
        return int(self.embed_w.shape[0])

    # -------------------------------------------------------------------------
    # Parameter plumbing
    # -------------------------------------------------------------------------

    def arrays(self) -> List[np.ndarray]:
        return self.params.arrays() + [self.embed_w, self.embed_b, self.null_token]

    def with_arrays(self, arrays: List[np.ndarray]) -> "Denoiser":
        """Copy sharing schedule and normalizer but carrying new parameter arrays."""
        n_mlp = 2 * len(self.params.weights)
        return Denoiser(
            spec=self.spec,
            params=Parameters.from_arrays(arrays[:n_mlp]),
            embed_w=arrays[n_mlp],
            embed_b=arrays[n_mlp + 1],
            null_token=arrays[n_mlp + 2],
            schedule=self.schedule,
            normalizer=self.normalizer,
            horizon=self.horizon,
            n_u=self.n_u,
            step_dim=self.step_dim,
            schedule_config=self.schedule_config,
        )

    # -------------------------------------------------------------------------
    # Evaluation
    # -------------------------------------------------------------------------

    def _inputs(self, u_k: np.ndarray, k: np.ndarray, cond: np.ndarray, uncond: np.ndarray) -> np.ndarray:
        batch = u_k.shape[0]
        k = np.broadcast_to(np.asarray(k), (batch,))
        uncond = np.broadcast_to(np.asarray(uncond, dtype=bool), (batch,))
        cond_emb = cond @ self.embed_w + self.embed_b
        cond_emb = np.where(uncond[:, None], self.null_token[None, :], cond_emb)
        return np.concatenate([u_k, step_embedding(k, self.step_dim), cond_emb], axis=1)

    def predict_with_cache(
        self, u_k: np.ndarray, k: np.ndarray, cond: np.ndarray, uncond: np.ndarray
    ) -> Tuple[np.ndarray, DenoiserCache]:
        inputs = self._inputs(u_k, k, cond, uncond)
        out, cache = forward_with_cache(self.spec, self.params, inputs)
        self.counters["evaluations"] += u_k.shape[0]
        mask = np.broadcast_to(np.asarray(uncond, dtype=bool), (u_k.shape[0],)).copy()
        return out, DenoiserCache(cache, cond, mask)

    def predict(self, u_k: np.ndarray, k: np.ndarray, cond: np.ndarray, uncond: np.ndarray) -> np.ndarray:
        """
        Predict noise for a batch.

        Args:
            u_k: Noisy normalized sequences (B, H*n_u)
            k: Training step per row (scalar or (B,))
            cond: Normalized states (B, n_x); ignored on unconditioned rows
            uncond: Use the null token (scalar or (B,) bool)
        """
        return self.predict_with_cache(u_k, k, cond, uncond)[0]

    def gradients(self, cache: DenoiserCache, grad_out: np.ndarray) -> List[np.ndarray]:
        """Gradients of sum(grad_out * eps_hat) for every array in `arrays()` order."""
        mlp_grads, grad_in = backward(self.spec, self.params, None, grad_out, cache.mlp)
        g_cond = grad_in[:, -self.cond_dim:]
        conditioned = ~cache.uncond
        g_w = cache.cond[conditioned].T @ g_cond[conditioned]
        g_b = g_cond[conditioned].sum(axis=0)
        g_null = g_cond[cache.uncond].sum(axis=0)
        return mlp_grads.arrays() + [g_w, g_b, g_null]


def build_denoiser(
    n_x: int,
    horizon: int,
    n_u: int,
    schedule: NoiseSchedule,
    normalizer: Normalizer,
    rng: np.random.Generator,
    hidden: Optional[List[int]] = None,
    step_dim: int = 32,
    cond_dim: int = 32,
    schedule_config: Optional[Dict[str, Any]] = None,
) -> Denoiser:
    """Freshly initialized denoiser (SiLU MLP, default 3 x 256)."""
    hidden = hidden or [256, 256, 256]
    seq_dim = horizon * n_u
    spec = MlpSpec.uniform(seq_dim + step_dim + cond_dim, hidden, seq_dim, Activation.SILU)
    bound = np.sqrt(1.0 / n_x)
    return Denoiser(
        spec=spec,
        params=init_parameters(spec, rng),
        embed_w=rng.uniform(-bound, bound, size=(n_x, cond_dim)),
        embed_b=rng.uniform(-bound, bound, size=cond_dim),
        null_token=rng.standard_normal(cond_dim) * 0.1,
        schedule=schedule,
        normalizer=normalizer,
        horizon=horizon,
        n_u=n_u,
        step_dim=step_dim,
        schedule_config=schedule_config or {},
    )


# =============================================================================
# Persistence
# =============================================================================

def save_denoiser(path: Union[str, Path], denoiser: Denoiser, meta: Optional[Dict[str, Any]] = None) -> None:
    """Checkpoint the denoiser with its schedule settings and normalizer."""
    full_meta = {
        "kind": "denoiser",
        "horizon": denoiser.horizon,
        "n_u": denoiser.n_u,
        "step_dim": denoiser.step_dim,
        "schedule": denoiser.schedule_config,
        "normalizer": denoiser.normalizer.to_meta(),
        **(meta or {}),
    }
    save_checkpoint(
        path,
        denoiser.spec,
        denoiser.params,
        full_meta,
        {"embed_w": denoiser.embed_w, "embed_b": denoiser.embed_b, "null_token": denoiser.null_token},
    )


def load_denoiser(path: Union[str, Path]) -> Denoiser:
    """
    Restore a denoiser written by save_denoiser.

    Raises:
        CheckpointMismatch: If the file is not a denoiser checkpoint
    """
    checkpoint = load_checkpoint(path)
    meta = checkpoint.meta
    if meta.get("kind") != "denoiser":
        raise CheckpointMismatch(f"{path}: not a denoiser checkpoint (kind={meta.get('kind')})")
    sched = meta["schedule"]
    schedule = make_schedule(
        int(sched["steps"]),
        ScheduleKind(sched["kind"]),
        float(sched["beta_min"]),
        float(sched["beta_max"]),
        ReverseVariance(sched["variance"]),
    )
    return Denoiser(
        spec=checkpoint.spec,
        params=checkpoint.params,
        embed_w=checkpoint.extras["embed_w"],
        embed_b=checkpoint.extras["embed_b"],
        null_token=checkpoint.extras["null_token"],
        schedule=schedule,
        normalizer=Normalizer.from_meta(meta["normalizer"]),
        horizon=int(meta["horizon"]),
        n_u=int(meta["n_u"]),
        step_dim=int(meta["step_dim"]),
        schedule_config=sched,
    )
