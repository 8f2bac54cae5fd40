"""
Fixed-step RK4 discretization with zero-order-hold input.

`step` and `rollout_states` realize the discrete map x_{t+1} = f(x_t, u_t). The
stage-recording rollout and the complex-step field Jacobians feed the adjoint
gradient in `src.ocp.adjoint`.
"""
from typing import Tuple

import numpy as np

from .models import FloatArray, SystemModel, check_dimensions

# Complex-step increment; the derivative carries no subtractive cancellation.
COMPLEX_STEP = 1e-30


class IntegrationBlowUp(ArithmeticError):
    """Raised when an integration step produces a non-finite state."""
    pass


def rk4_step(model: SystemModel, x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """One classical RK4 step of length dt (dt may be negative for time reversal)."""
    field = model.derivative
    k1 = field(x, u)
    k2 = field(x + 0.5 * dt * k1, u)
    k3 = field(x + 0.5 * dt * k2, u)
    k4 = field(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(model: SystemModel, x: np.ndarray, u: np.ndarray) -> FloatArray:
    """
    Advance the state by one sampling interval with the input held constant.

    Args:
        model: Plant with sampling interval dt
        x: State, shape (..., n_x)
        u: Input, shape (..., n_u)

    Returns:
        Next state

    Raises:
        DimensionMismatch: On wrong trailing dimensions
        IntegrationBlowUp: If the result is not finite
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    check_dimensions(model, x, u)
    with np.errstate(over="ignore", invalid="ignore"):
        x_next = rk4_step(model, x, u, model.dt)
    if not np.all(np.isfinite(x_next)):
        raise IntegrationBlowUp(f"{model.kind.value}: non-finite state after step from {x}")
    return x_next


def _rollout(model: SystemModel, x0: np.ndarray, u_seq: np.ndarray) -> np.ndarray:
    horizon = u_seq.shape[-2]
    batch = np.broadcast_shapes(x0.shape[:-1], u_seq.shape[:-2])
    states = np.empty(batch + (horizon + 1, model.n_x))
    states[..., 0, :] = x0
    x = np.broadcast_to(x0, batch + (model.n_x,))
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(horizon):
            x = rk4_step(model, x, u_seq[..., i, :], model.dt)
            states[..., i + 1, :] = x
    return states


def rollout_states(model: SystemModel, x0: np.ndarray, u_seq: np.ndarray) -> FloatArray:
    """
    Simulate a control sequence from an initial state.

    Args:
        model: Plant
        x0: Initial state, shape (n_x,) or (..., n_x)
        u_seq: Inputs, shape (..., H, n_u); leading axes are a batch of sequences

    Returns:
        States of shape (..., H + 1, n_x) with states[..., 0, :] == x0

    Raises:
        IntegrationBlowUp: If any simulated state is non-finite
    """
    x0 = np.asarray(x0, dtype=float)
    u_seq = np.asarray(u_seq, dtype=float)
    check_dimensions(model, x0, u_seq)
    states = _rollout(model, x0, u_seq)
    if not np.all(np.isfinite(states)):
        raise IntegrationBlowUp(f"{model.kind.value}: rollout diverged")
    return states


def rollout_unchecked(model: SystemModel, x0: np.ndarray, u_seq: np.ndarray) -> FloatArray:
    """Like rollout_states but leaves non-finite rows in place for the caller to score."""
    return _rollout(model, np.asarray(x0, dtype=float), np.asarray(u_seq, dtype=float))


def rollout_with_stages(
    model: SystemModel, x0: np.ndarray, u_seq: np.ndarray
) -> Tuple[FloatArray, FloatArray]:
    """
    Rollout of a single sequence that also records the four RK4 stage points.

    Args:
        model: Plant
        x0: Initial state (n_x,)
        u_seq: Inputs (H, n_u)

    Returns:
        A tuple (states (H + 1, n_x), stage_points (H, 4, n_x)) where stage_points[i, s]
        is the argument of the vector field in stage s of step i
    """
    horizon = u_seq.shape[0]
    dt = model.dt
    field = model.derivative
    states = np.empty((horizon + 1, model.n_x))
    stages = np.empty((horizon, 4, model.n_x))
    states[0] = x0
    x = x0
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(horizon):
            u = u_seq[i]
            k1 = field(x, u)
            z2 = x + 0.5 * dt * k1
            k2 = field(z2, u)
            z3 = x + 0.5 * dt * k2
            k3 = field(z3, u)
            z4 = x + dt * k3
            k4 = field(z4, u)
            stages[i, 0], stages[i, 1], stages[i, 2], stages[i, 3] = x, z2, z3, z4
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            states[i + 1] = x
    return states, stages


def field_jacobians(
    model: SystemModel, z: np.ndarray, u: np.ndarray
) -> Tuple[FloatArray, FloatArray]:
    """
    Jacobians of the vector field by complex-step differentiation.

    Args:
        model: Plant (its vector field must be complex-analytic)
        z: Evaluation states, shape (N, n_x)
        u: Evaluation inputs, shape (N, n_u)

    Returns:
        A tuple (A, B) with A[n] = df/dx, shape (N, n_x, n_x), and B[n] = df/du,
        shape (N, n_x, n_u)
    """
    n_x, n_u = model.n_x, model.n_u
    n_dir = n_x + n_u
    zc = np.repeat(z[None].astype(complex), n_dir, axis=0)
    uc = np.repeat(u[None].astype(complex), n_dir, axis=0)
    for d in range(n_x):
        zc[d, :, d] += 1j * COMPLEX_STEP
    for d in range(n_u):
        uc[n_x + d, :, d] += 1j * COMPLEX_STEP

    # sens[d, n, i] = d f_i / d v_d at point n
    sens = model.derivative(zc, uc).imag / COMPLEX_STEP
    jac_x = np.ascontiguousarray(sens[:n_x].transpose(1, 2, 0))
    jac_u = np.ascontiguousarray(sens[n_x:].transpose(1, 2, 0))
    return jac_x, jac_u
