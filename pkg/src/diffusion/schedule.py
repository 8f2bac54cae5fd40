"""
Noise schedules for the discrete diffusion chain.

Steps are 1-based throughout: step k uses betas[k - 1]. A respaced schedule keeps a
subset of the training steps; `model_steps[k - 1]` is the training step the denoiser
is evaluated at for reverse step k.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from ..dynamics import FloatArray

DEFAULT_BETA_MIN = 0.02
DEFAULT_BETA_MAX = 0.35
DEFAULT_MAX_TERMINAL_ALPHA = 0.05


class ScheduleKind(str, Enum):
    LINEAR = "linear"
    COSINE = "cosine"


class ReverseVariance(str, Enum):
    """Sigma_k of the reverse transition."""
    BETA = "beta"
    POSTERIOR = "posterior"


@dataclass(frozen=True)
class NoiseSchedule:
    """
    Per-step coefficients of the forward and reverse processes.

    Attributes:
        betas: beta_k, k = 1..K
        alphas: cumulative products prod_{j<=k} (1 - beta_j)
        a: 1 / sqrt(1 - beta_k), the reverse-mean coefficient of u^k
        b: -beta_k / (sqrt(1 - beta_k) sqrt(1 - alpha_k)), the coefficient of the noise estimate
        sigmas: reverse variances Sigma_k
        model_steps: training step index evaluated at each step
    """
    betas: FloatArray
    alphas: FloatArray
    a: FloatArray
    b: FloatArray
    sigmas: FloatArray
    model_steps: np.ndarray
    variance: ReverseVariance = ReverseVariance.BETA

    @property
    def steps(self) -> int:
        return int(self.betas.shape[0])


def _coefficients(
    betas: np.ndarray, variance: ReverseVariance, model_steps: np.ndarray
) -> NoiseSchedule:
    alphas = np.cumprod(1.0 - betas)
    a = 1.0 / np.sqrt(1.0 - betas)
    b = -betas / (np.sqrt(1.0 - betas) * np.sqrt(1.0 - alphas))
    if variance is ReverseVariance.POSTERIOR:
        previous = np.concatenate([[1.0], alphas[:-1]])
        sigmas = betas * (1.0 - previous) / (1.0 - alphas)
    else:
        sigmas = betas.copy()
    return NoiseSchedule(betas, alphas, a, b, sigmas, model_steps, variance)


def make_schedule(
    steps: int,
    kind: ScheduleKind = ScheduleKind.LINEAR,
    beta_min: float = DEFAULT_BETA_MIN,
    beta_max: float = DEFAULT_BETA_MAX,
    variance: ReverseVariance = ReverseVariance.BETA,
    max_terminal_alpha: Optional[float] = None,
) -> NoiseSchedule:
    """
    Build a noise schedule.

    Args:
        steps: K >= 1
        kind: Linear betas from beta_min to beta_max, or the cosine cumulative-alpha
            profile with betas clipped to [beta_min, beta_max]
        beta_min: Smallest beta, > 0
        beta_max: Largest beta, < 1
        variance: Reverse variance choice
        max_terminal_alpha: If set, require alpha_K <= this value

    Returns:
        NoiseSchedule with model_steps = 1..K

    Raises:
        ValueError: On an invalid range or a terminal alpha above the limit
    """
    if steps < 1:
        raise ValueError(f"Diffusion needs at least one step, got {steps}")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ValueError(f"Require 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}")

    if kind is ScheduleKind.COSINE:
        offset = 0.008
        grid = np.arange(steps + 1) / steps
        profile = np.cos((grid + offset) / (1.0 + offset) * np.pi / 2.0) ** 2
        cumulative = profile / profile[0]
        betas = np.clip(1.0 - cumulative[1:] / cumulative[:-1], beta_min, beta_max)
    else:
        betas = np.linspace(beta_min, beta_max, steps)

    schedule = _coefficients(betas, variance, np.arange(1, steps + 1))
    if max_terminal_alpha is not None and schedule.alphas[-1] > max_terminal_alpha:
        raise ValueError(
            f"Terminal alpha {schedule.alphas[-1]:.4f} exceeds {max_terminal_alpha}; "
            f"the final noise level is too low for a standard normal prior"
        )
    return schedule


def default_schedule(steps: int = 25) -> NoiseSchedule:
    """Linear 0.02 -> 0.35 schedule with the terminal-alpha self-check."""
    return make_schedule(steps, max_terminal_alpha=DEFAULT_MAX_TERMINAL_ALPHA)


def respace(schedule: NoiseSchedule, steps: int) -> NoiseSchedule:
    """
    Shorter reverse chain over evenly spaced training steps.

    The kept steps always include the first and last training step; betas are
    re-derived from the kept cumulative alphas so the chain's marginals match.
    """
    total = schedule.steps
    if not 1 <= steps <= total:
        raise ValueError(f"Respaced chain needs 1..{total} steps, got {steps}")
    if steps == total:
        return schedule
    kept = np.unique(np.round(np.linspace(1, total, steps)).astype(int))
    kept_alphas = schedule.alphas[kept - 1]
    previous = np.concatenate([[1.0], kept_alphas[:-1]])
    betas = 1.0 - kept_alphas / previous
    return _coefficients(betas, schedule.variance, schedule.model_steps[kept - 1])


def forward_noising(
    schedule: NoiseSchedule, u0: np.ndarray, k: np.ndarray, noise: np.ndarray
) -> FloatArray:
    """
    Closed-form forward marginal u^k = sqrt(alpha_k) u0 + sqrt(1 - alpha_k) eps.

    Args:
        schedule: Noise schedule
        u0: Clean normalized sequences (..., D)
        k: Step per row (scalar or shape matching the leading axes), 1..K
        noise: Standard normal draws with the shape of u0
    """
    k = np.asarray(k)
    if np.any(k < 1) or np.any(k > schedule.steps):
        raise ValueError(f"Diffusion step out of range 1..{schedule.steps}")
    alpha = schedule.alphas[k - 1]
    if np.ndim(alpha) > 0:
        alpha = alpha[..., None]
    return np.sqrt(alpha) * u0 + np.sqrt(1.0 - alpha) * noise
