"""
Optimal control problem: quadratic cost on a nonlinear state transform.

J(x0, u) = sum_{i<H} [x_nl,i' Q x_nl,i + u_i' R u_i] + x_nl,H' P x_nl,H over the RK4
rollout from x0. All weight matrices are diagonal and stored as their diagonals.
"""
from enum import Enum
from typing import Dict, List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..dynamics import FloatArray, SystemKind, SystemModel, rollout_unchecked
from ..dynamics.models import check_dimensions
from ..utils.fields import FloatList
from ..utils.integrity import digest_payload


class NonFiniteCost(ArithmeticError):
    """Raised when a cost evaluation hits a diverged rollout."""
    pass


class TransformKind(str, Enum):
    """Nonlinear state transforms x -> x_nl, one per benchmark."""
    CART_POLE = "cart_pole"
    PENDUBOT = "pendubot"
    DOUBLE_CART_POLE = "double_cart_pole"
    IDENTITY = "identity"


DEFAULT_TRANSFORMS: Dict[SystemKind, TransformKind] = {
    SystemKind.CART_POLE: TransformKind.CART_POLE,
    SystemKind.PENDUBOT: TransformKind.PENDUBOT,
    SystemKind.DOUBLE_CART_POLE: TransformKind.DOUBLE_CART_POLE,
    SystemKind.LINEAR: TransformKind.IDENTITY,
}


class InputBox(BaseModel):
    """Compact input set U = [lower, upper] (componentwise)."""
    model_config = ConfigDict(frozen=True)

    lower: FloatList
    upper: FloatList

    @model_validator(mode="after")
    def _check_bounds(self) -> "InputBox":
        if len(self.lower) != len(self.upper) or not self.lower:
            raise ValueError("Input box bounds must be non-empty and of equal length")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError(f"Input box requires lower < upper, got {self.lower} / {self.upper}")
        return self

    @property
    def lower_array(self) -> FloatArray:
        return np.asarray(self.lower, dtype=float)

    @property
    def upper_array(self) -> FloatArray:
        return np.asarray(self.upper, dtype=float)

    @property
    def width(self) -> FloatArray:
        return self.upper_array - self.lower_array


class OcpSpec(BaseModel):
    """Horizon, diagonal weights, transform and input box of one OCP."""
    model_config = ConfigDict(frozen=True)

    horizon: int = Field(ge=1)
    q: FloatList
    r: FloatList
    p: FloatList
    transform: TransformKind
    box: InputBox

    @model_validator(mode="after")
    def _check_weights(self) -> "OcpSpec":
        if len(self.q) != len(self.p):
            raise ValueError("Q and P diagonals must have equal length")
        if any(w < 0 for w in self.q) or any(w < 0 for w in self.p):
            raise ValueError("Q and P diagonals must be non-negative")
        if any(w <= 0 for w in self.r):
            raise ValueError("R diagonal must be strictly positive")
        if len(self.r) != len(self.box.lower):
            raise ValueError("R diagonal and input box must have the same dimension")
        return self

    @property
    def n_u(self) -> int:
        return len(self.r)

    def scaled(self, factor: float) -> "OcpSpec":
        """Copy with every weight multiplied by factor."""
        return self.model_copy(update={
            "q": [factor * w for w in self.q],
            "r": [factor * w for w in self.r],
            "p": [factor * w for w in self.p],
        })

    def digest(self) -> str:
        return digest_payload(self.model_dump(mode="json"))


# =============================================================================
# Transforms
# =============================================================================

def nonlinear_transform(kind: TransformKind, x: np.ndarray) -> np.ndarray:
    """
    Map states to the transformed coordinates penalized by the cost.

    Every transformed entry depends only on the state entry with the same index.

    Args:
        kind: Which transform
        x: States, shape (..., n_x)

    Returns:
        x_nl with the same shape
    """
    if kind is TransformKind.CART_POLE:
        z = x.copy()
        z[..., 2] = -((x[..., 2] - np.pi) ** 2) / np.pi
        return z
    if kind is TransformKind.PENDUBOT:
        z = x.copy()
        z[..., 0] = 1.0 + np.cos(x[..., 0])
        z[..., 1] = 1.0 - np.cos(x[..., 1])
        return z
    if kind is TransformKind.DOUBLE_CART_POLE:
        z = x.copy()
        z[..., 2] = np.sin(x[..., 2] / 2.0)
        z[..., 4] = np.sin(x[..., 4] / 2.0)
        return z
    return x.copy()


def transform_derivative(kind: TransformKind, x: np.ndarray) -> np.ndarray:
    """Elementwise derivative d x_nl[k] / d x[k] (the transform Jacobian is diagonal)."""
    d = np.ones_like(x)
    if kind is TransformKind.CART_POLE:
        d[..., 2] = -2.0 * (x[..., 2] - np.pi) / np.pi
    elif kind is TransformKind.PENDUBOT:
        d[..., 0] = -np.sin(x[..., 0])
        d[..., 1] = np.sin(x[..., 1])
    elif kind is TransformKind.DOUBLE_CART_POLE:
        d[..., 2] = 0.5 * np.cos(x[..., 2] / 2.0)
        d[..., 4] = 0.5 * np.cos(x[..., 4] / 2.0)
    return d


def weighted_square(z: np.ndarray, weights: List[float]) -> np.ndarray:
    """sum_k w_k z_k^2 over the last axis, accumulated in a fixed order."""
    acc = weights[0] * z[..., 0] ** 2
    for k in range(1, len(weights)):
        acc = acc + weights[k] * z[..., k] ** 2
    return acc


# =============================================================================
# Costs
# =============================================================================

def stage_cost(spec: OcpSpec, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """x_nl' Q x_nl + u' R u for states (..., n_x) and inputs (..., n_u)."""
    return weighted_square(nonlinear_transform(spec.transform, x), spec.q) + weighted_square(u, spec.r)


def terminal_cost(spec: OcpSpec, x: np.ndarray) -> np.ndarray:
    """x_nl' P x_nl."""
    return weighted_square(nonlinear_transform(spec.transform, x), spec.p)


def cost_from_states(spec: OcpSpec, states: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Accumulate the OCP cost along precomputed states (..., H+1, n_x)."""
    z = nonlinear_transform(spec.transform, states)
    acc = np.zeros(states.shape[:-2])
    for i in range(u.shape[-2]):
        acc = acc + weighted_square(z[..., i, :], spec.q) + weighted_square(u[..., i, :], spec.r)
    return acc + weighted_square(z[..., -1, :], spec.p)


def check_problem(spec: OcpSpec, model: SystemModel, x0: np.ndarray, u: np.ndarray) -> None:
    check_dimensions(model, x0, u)
    if u.shape[-2] != spec.horizon:
        raise ValueError(f"Control sequence has {u.shape[-2]} steps, horizon is {spec.horizon}")
    if len(spec.q) != model.n_x:
        raise ValueError(f"Q has {len(spec.q)} entries, state dimension is {model.n_x}")


def total_cost(spec: OcpSpec, model: SystemModel, x0: np.ndarray, u: np.ndarray) -> float:
    """
    Evaluate J(x0, u) over the rollout from x0.

    Args:
        spec: OCP definition
        model: Plant
        x0: Initial state (n_x,)
        u: Control sequence (H, n_u)

    Returns:
        The scalar cost

    Raises:
        NonFiniteCost: If the rollout or the cost is non-finite
    """
    x0 = np.asarray(x0, dtype=float)
    u = np.asarray(u, dtype=float)
    check_problem(spec, model, x0, u)
    states = rollout_unchecked(model, x0, u)
    with np.errstate(over="ignore", invalid="ignore"):
        value = float(cost_from_states(spec, states, u))
    if not np.isfinite(value):
        raise NonFiniteCost(f"Non-finite cost from state {x0}")
    return value


def evaluate_costs(spec: OcpSpec, model: SystemModel, x0: np.ndarray, u_batch: np.ndarray) -> FloatArray:
    """
    Score a batch of sequences from one state; diverged rows score +inf.

    Args:
        u_batch: Sequences, shape (M, H, n_u)

    Returns:
        Costs, shape (M,)
    """
    x0 = np.asarray(x0, dtype=float)
    u_batch = np.asarray(u_batch, dtype=float)
    check_problem(spec, model, x0, u_batch)
    states = rollout_unchecked(model, x0, u_batch)
    with np.errstate(over="ignore", invalid="ignore"):
        costs = cost_from_states(spec, states, u_batch)
    return np.where(np.isfinite(costs), costs, np.inf)


# =============================================================================
# Swing-up success
# =============================================================================

def wrap_angle(angle: np.ndarray) -> np.ndarray:
    """Wrap to [-pi, pi)."""
    return np.mod(angle + np.pi, 2.0 * np.pi) - np.pi


def upright_error(kind: SystemKind, x: np.ndarray) -> np.ndarray:
    """
    Largest wrapped angular distance of any link from the upright configuration.

    For the linear system this is |x|.
    """
    x = np.asarray(x, dtype=float)
    if kind is SystemKind.CART_POLE:
        return np.abs(wrap_angle(x[..., 2] - np.pi))
    if kind is SystemKind.PENDUBOT:
        return np.maximum(np.abs(wrap_angle(x[..., 0] - np.pi)), np.abs(wrap_angle(x[..., 1])))
    if kind is SystemKind.DOUBLE_CART_POLE:
        return np.maximum(np.abs(wrap_angle(x[..., 2])), np.abs(wrap_angle(x[..., 4])))
    return np.abs(x[..., 0])
