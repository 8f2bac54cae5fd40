"""Adam with bias correction over an ordered list of parameter arrays."""
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np


class NonFiniteGradient(ArithmeticError):
    """Raised when an optimizer step receives NaN or infinite gradients."""
    pass


@dataclass
class AdamState:
    first_moments: List[np.ndarray]
    second_moments: List[np.ndarray]
    step: int = 0
    learning_rate: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_adam(params: Sequence[np.ndarray], learning_rate: float = 3e-3) -> AdamState:
    return AdamState(
        first_moments=[np.zeros_like(p) for p in params],
        second_moments=[np.zeros_like(p) for p in params],
        learning_rate=learning_rate,
    )


def adam_step(
    state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]
) -> Tuple[List[np.ndarray], AdamState]:
    """
    One bias-corrected Adam update.

    Args:
        state: Moments and hyperparameters (not modified)
        params: Current parameter arrays
        grads: Gradients, same shapes as params

    Returns:
        A tuple (new parameter arrays, new state)

    Raises:
        ValueError: On a shape mismatch
        NonFiniteGradient: If any gradient entry is not finite
    """
    if len(params) != len(grads) or len(params) != len(state.first_moments):
        raise ValueError("Parameter, gradient and moment lists differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"Gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("Non-finite gradient passed to adam_step")

    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** t
    correction2 = 1.0 - b2 ** t

    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moments, state.second_moments):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        new_params.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
        new_m.append(m)
        new_v.append(v)

    new_state = AdamState(new_m, new_v, t, state.learning_rate, b1, b2, state.epsilon)
    return new_params, new_state
