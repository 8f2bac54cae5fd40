"""
Reverse-chain sampling with optional classifier-free guidance.
"""
from typing import Optional

import numpy as np

from ..dynamics import FloatArray
from ..ocp import InputBox
from ..solver import project_box
from .denoiser import Denoiser, NoisePredictor
from .schedule import NoiseSchedule, respace


def guided_noise(
    predictor: NoisePredictor,
    u_k: np.ndarray,
    model_step: int,
    cond: np.ndarray,
    guidance_w: float,
) -> np.ndarray:
    """(1 + w) eps(u, k, x) - w eps(u, k, null); w = 0 skips the unconditioned pass."""
    eps_cond = predictor.predict(u_k, np.full(u_k.shape[0], model_step), cond, False)
    if guidance_w == 0.0:
        return eps_cond
    eps_uncond = predictor.predict(u_k, np.full(u_k.shape[0], model_step), cond, True)
    return (1.0 + guidance_w) * eps_cond - guidance_w * eps_uncond


def reverse_step(
    predictor: NoisePredictor,
    schedule: NoiseSchedule,
    u_k: np.ndarray,
    k: int,
    cond: np.ndarray,
    guidance_w: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[np.ndarray] = None,
) -> FloatArray:
    """
    One reverse transition u^k -> u^{k-1}.

    Args:
        predictor: Noise predictor
        schedule: Sampling schedule (possibly respaced)
        u_k: Current normalized samples (B, D)
        k: Reverse step, 1..K of `schedule`
        cond: Normalized states (B, n_x)
        guidance_w: Classifier-free guidance weight
        rng: Source of z when `noise` is not supplied
        noise: Explicit standard normal z (B, D)

    Returns:
        u^{k-1}; no noise is added at k = 1
    """
    if not 1 <= k <= schedule.steps:
        raise ValueError(f"Reverse step {k} outside 1..{schedule.steps}")
    eps_hat = guided_noise(predictor, u_k, int(schedule.model_steps[k - 1]), cond, guidance_w)
    mean = schedule.a[k - 1] * u_k + schedule.b[k - 1] * eps_hat
    if isinstance(predictor, Denoiser):
        predictor.counters["reverse_steps"] += u_k.shape[0]
    if k == 1:
        return mean
    if noise is None:
        if rng is None:
            raise ValueError("reverse_step needs rng or noise for k > 1")
        noise = rng.standard_normal(u_k.shape)
    return mean + np.sqrt(schedule.sigmas[k - 1]) * noise


def sample_sequences(
    denoiser: Denoiser,
    state: np.ndarray,
    count: int,
    rng: np.random.Generator,
    guidance_w: float = 0.0,
    steps: Optional[int] = None,
    box: Optional[InputBox] = None,
) -> FloatArray:
    """
    Draw `count` control sequences for one state.

    Every sample has its own generator seeded from `rng`; the M chains run as one
    batch.

    Args:
        denoiser: Trained denoiser
        state: Physical state (n_x,)
        count: Number of samples M
        rng: Parent random stream
        guidance_w: Classifier-free guidance weight
        steps: Reverse-chain length (default: the training K)
        box: Input box for the final clamp (default: the normalizer's box)

    Returns:
        Sequences (M, H, n_u), denormalized and clamped into the box
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    schedule = denoiser.schedule if steps is None else respace(denoiser.schedule, steps)
    dim = denoiser.sequence_dim
    streams = [np.random.default_rng(seed) for seed in rng.integers(0, 2**63 - 1, size=count)]

    cond = np.repeat(denoiser.normalizer.normalize_state(state)[None, :], count, axis=0)
    u = np.stack([g.standard_normal(dim) for g in streams])
    for k in range(schedule.steps, 0, -1):
        noise = np.stack([g.standard_normal(dim) for g in streams]) if k > 1 else None
        u = reverse_step(denoiser, schedule, u, k, cond, guidance_w, noise=noise)

    sequences = denoiser.normalizer.denormalize_sequence(u.reshape(count, denoiser.horizon, denoiser.n_u))
    if box is None:
        box = InputBox(lower=denoiser.normalizer.input_lower.tolist(),
                       upper=denoiser.normalizer.input_upper.tolist())
    return project_box(sequences, box)


def sample_sequence(
    denoiser: Denoiser,
    state: np.ndarray,
    rng: np.random.Generator,
    guidance_w: float = 0.0,
    steps: Optional[int] = None,
) -> FloatArray:
    """Single sequence (H, n_u); see sample_sequences."""
    return sample_sequences(denoiser, state, 1, rng, guidance_w, steps)[0]
