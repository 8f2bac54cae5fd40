"""
Exact cost gradient through the RK4 discretization.

The backward recursion differentiates the discrete map actually used for the cost
(discretize-then-differentiate), so the gradient is consistent with `total_cost` to
rounding error.
"""
from typing import Tuple

import numpy as np

from ..dynamics import FloatArray, SystemModel, field_jacobians, rollout_with_stages
from .problem import (
    NonFiniteCost,
    OcpSpec,
    check_problem,
    cost_from_states,
    nonlinear_transform,
    transform_derivative,
)


def cost_and_gradient(
    spec: OcpSpec, model: SystemModel, x0: np.ndarray, u: np.ndarray
) -> Tuple[float, FloatArray]:
    """
    Cost J(x0, u) and its gradient with respect to every input entry.

    Args:
        spec: OCP definition
        model: Plant
        x0: Initial state (n_x,)
        u: Control sequence (H, n_u)

    Returns:
        A tuple (cost, gradient) with gradient of shape (H, n_u)

    Raises:
        NonFiniteCost: If the rollout, the cost or any adjoint quantity is non-finite
    """
    x0 = np.asarray(x0, dtype=float)
    u = np.asarray(u, dtype=float)
    check_problem(spec, model, x0, u)

    horizon, n_x, n_u = u.shape[0], model.n_x, model.n_u
    dt = model.dt
    states, stages = rollout_with_stages(model, x0, u)
    if not np.all(np.isfinite(states)):
        raise NonFiniteCost(f"Rollout diverged from state {x0}")
    cost = float(cost_from_states(spec, states, u))

    jac_x, jac_u = field_jacobians(
        model, stages.reshape(-1, n_x), np.repeat(u, 4, axis=0)
    )
    jac_x = jac_x.reshape(horizon, 4, n_x, n_x)
    jac_u = jac_u.reshape(horizon, 4, n_x, n_u)

    q, r, p = np.asarray(spec.q), np.asarray(spec.r), np.asarray(spec.p)
    z = nonlinear_transform(spec.transform, states)
    dz = transform_derivative(spec.transform, states)

    # lam = dJ / dx_{i+1} while processing step i
    lam = 2.0 * dz[-1] * p * z[-1]
    grad = np.empty((horizon, n_u))
    for i in range(horizon - 1, -1, -1):
        a, b = jac_x[i], jac_u[i]
        g1 = (dt / 6.0) * lam
        g2 = (dt / 3.0) * lam
        g3 = (dt / 3.0) * lam
        g4 = (dt / 6.0) * lam

        adj_x = lam.copy()
        back = a[3].T @ g4
        adj_u = b[3].T @ g4
        adj_x += back
        g3 = g3 + dt * back

        back = a[2].T @ g3
        adj_u += b[2].T @ g3
        adj_x += back
        g2 = g2 + 0.5 * dt * back

        back = a[1].T @ g2
        adj_u += b[1].T @ g2
        adj_x += back
        g1 = g1 + 0.5 * dt * back

        adj_x += a[0].T @ g1
        adj_u += b[0].T @ g1

        adj_x += 2.0 * dz[i] * q * z[i]
        grad[i] = adj_u + 2.0 * r * u[i]
        lam = adj_x

    if not (np.isfinite(cost) and np.all(np.isfinite(grad))):
        raise NonFiniteCost(f"Non-finite cost or gradient from state {x0}")
    return cost, grad


def cost_gradient(spec: OcpSpec, model: SystemModel, x0: np.ndarray, u: np.ndarray) -> FloatArray:
    """Gradient of `total_cost` with respect to u, shape (H, n_u)."""
    return cost_and_gradient(spec, model, x0, u)[1]
