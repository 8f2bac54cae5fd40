"""
Benchmark plant models.

Continuous-time Lagrangian models of the cart-pole, pendubot and double cart-pole,
plus a scalar linear system used by the closed-form oracles. Every vector field
accepts arbitrary leading batch dimensions and is written with complex-safe
operations only, so the adjoint can differentiate it by complex step.

State layouts:
    cart_pole         [x, x_dot, theta, theta_dot]            theta = 0 down, pi up
    pendubot          [theta1, theta2, theta1_dot, theta2_dot]  theta1 = 0 down (absolute),
                                                                theta2 relative to link 1
    double_cart_pole  [x, x_dot, theta1, theta1_dot, theta2, theta2_dot]
                                                                absolute angles, 0 up, pi down
    linear            [x]                                     x_dot = a*x + b*u
"""
from enum import Enum
from typing import Callable, Dict

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field

FloatArray = NDArray[np.float64]


class DimensionMismatch(ValueError):
    """Raised when a state or input vector does not match the model's dimensions."""
    pass


class SystemKind(str, Enum):
    """The plants the pipeline knows how to simulate."""
    CART_POLE = "cart_pole"
    PENDUBOT = "pendubot"
    DOUBLE_CART_POLE = "double_cart_pole"
    LINEAR = "linear"


STATE_DIMENSIONS: Dict[SystemKind, int] = {
    SystemKind.CART_POLE: 4,
    SystemKind.PENDUBOT: 4,
    SystemKind.DOUBLE_CART_POLE: 6,
    SystemKind.LINEAR: 1,
}


class SystemModel(BaseModel):
    """
    Parametrized plant with its sampling interval.

    Masses in kg, lengths in m, gravity in m/s^2, friction coefficients are viscous
    (force or torque per unit velocity). `pole_mass`/`pole_length` describe the first
    (or only) link, the `_2` fields the second link.
    """
    model_config = ConfigDict(frozen=True, use_enum_values=False)

    kind: SystemKind
    dt: float = Field(default=0.01, gt=0.0)
    cart_mass: float = Field(default=1.0, gt=0.0)
    pole_mass: float = Field(default=0.1, gt=0.0)
    pole_mass_2: float = Field(default=0.1, gt=0.0)
    pole_length: float = Field(default=0.5, gt=0.0)
    pole_length_2: float = Field(default=0.5, gt=0.0)
    gravity: float = Field(default=9.81, ge=0.0)
    cart_friction: float = Field(default=0.0, ge=0.0)
    joint_friction: float = Field(default=0.0, ge=0.0)
    linear_a: float = 0.0
    linear_b: float = 1.0

    @property
    def n_x(self) -> int:
        return STATE_DIMENSIONS[self.kind]

    @property
    def n_u(self) -> int:
        return 1

    def derivative(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Evaluate the vector field without dimension checks (hot path)."""
        return _VECTOR_FIELDS[self.kind](self, x, u)


# =============================================================================
# Vector fields
# =============================================================================

def _cart_pole(model: SystemModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    big_m, m, l, g = model.cart_mass, model.pole_mass, model.pole_length, model.gravity
    x_dot, theta, theta_dot = x[..., 1], x[..., 2], x[..., 3]
    s, c = np.sin(theta), np.cos(theta)

    r1 = u[..., 0] - model.cart_friction * x_dot + m * l * s * theta_dot**2
    r2 = -model.joint_friction * theta_dot - m * g * l * s
    d = big_m + m * s**2

    x_ddot = (l * r1 - c * r2) / (l * d)
    theta_ddot = ((big_m + m) * r2 - m * l * c * r1) / (m * l**2 * d)
    return np.stack([x_dot, x_ddot, theta_dot, theta_ddot], axis=-1)


def _pendubot(model: SystemModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    m1, m2 = model.pole_mass, model.pole_mass_2
    l1, l2, g = model.pole_length, model.pole_length_2, model.gravity
    th1, th2, w1, w2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    s2, c2 = np.sin(th2), np.cos(th2)
    s12 = np.sin(th1 + th2)

    m11 = (m1 + m2) * l1**2 + m2 * l2**2 + 2.0 * m2 * l1 * l2 * c2
    m12 = m2 * l2**2 + m2 * l1 * l2 * c2
    m22 = m2 * l2**2
    h = m2 * l1 * l2 * s2

    g1 = (m1 + m2) * g * l1 * np.sin(th1) + m2 * g * l2 * s12
    g2 = m2 * g * l2 * s12
    r1 = u[..., 0] - model.joint_friction * w1 + h * (2.0 * w1 * w2 + w2**2) - g1
    r2 = -model.joint_friction * w2 - h * w1**2 - g2

    det = m11 * m22 - m12**2
    acc1 = (m22 * r1 - m12 * r2) / det
    acc2 = (m11 * r2 - m12 * r1) / det
    return np.stack([w1, w2, acc1, acc2], axis=-1)


def _double_cart_pole(model: SystemModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    big_m, m1, m2 = model.cart_mass, model.pole_mass, model.pole_mass_2
    l1, l2, g = model.pole_length, model.pole_length_2, model.gravity
    x_dot, th1, w1, th2, w2 = x[..., 1], x[..., 2], x[..., 3], x[..., 4], x[..., 5]
    s1, c1, s2, c2 = np.sin(th1), np.cos(th1), np.sin(th2), np.cos(th2)
    s12, c12 = np.sin(th1 - th2), np.cos(th1 - th2)

    mass = np.empty(x.shape[:-1] + (3, 3), dtype=np.result_type(x, u))
    mass[..., 0, 0] = big_m + m1 + m2
    mass[..., 0, 1] = mass[..., 1, 0] = (m1 + m2) * l1 * c1
    mass[..., 0, 2] = mass[..., 2, 0] = m2 * l2 * c2
    mass[..., 1, 1] = (m1 + m2) * l1**2
    mass[..., 1, 2] = mass[..., 2, 1] = m2 * l1 * l2 * c12
    mass[..., 2, 2] = m2 * l2**2

    rhs = np.stack([
        u[..., 0] - model.cart_friction * x_dot
        + (m1 + m2) * l1 * s1 * w1**2 + m2 * l2 * s2 * w2**2,
        -model.joint_friction * w1 - m2 * l1 * l2 * s12 * w2**2 + (m1 + m2) * g * l1 * s1,
        -model.joint_friction * w2 + m2 * l1 * l2 * s12 * w1**2 + m2 * g * l2 * s2,
    ], axis=-1)

    acc = np.linalg.solve(mass, rhs[..., None])[..., 0]
    return np.stack([x_dot, acc[..., 0], w1, acc[..., 1], w2, acc[..., 2]], axis=-1)


def _linear(model: SystemModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    return model.linear_a * x + model.linear_b * u


_VECTOR_FIELDS: Dict[SystemKind, Callable[[SystemModel, np.ndarray, np.ndarray], np.ndarray]] = {
    SystemKind.CART_POLE: _cart_pole,
    SystemKind.PENDUBOT: _pendubot,
    SystemKind.DOUBLE_CART_POLE: _double_cart_pole,
    SystemKind.LINEAR: _linear,
}


# =============================================================================
# Public operations
# =============================================================================

def check_dimensions(model: SystemModel, x: np.ndarray, u: np.ndarray) -> None:
    """Raise DimensionMismatch unless the trailing axes match (n_x, n_u)."""
    if x.shape[-1:] != (model.n_x,):
        raise DimensionMismatch(
            f"{model.kind.value}: state has trailing shape {x.shape[-1:]}, expected ({model.n_x},)"
        )
    if u.shape[-1:] != (model.n_u,):
        raise DimensionMismatch(
            f"{model.kind.value}: input has trailing shape {u.shape[-1:]}, expected ({model.n_u},)"
        )


def continuous_derivative(model: SystemModel, x: np.ndarray, u: np.ndarray) -> FloatArray:
    """
    Time derivative of the state under a constant input.

    Args:
        model: Plant description
        x: State, shape (..., n_x)
        u: Input, shape (..., n_u)

    Returns:
        x_dot with the broadcast shape of the state

    Raises:
        DimensionMismatch: If trailing dimensions do not match the model
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    check_dimensions(model, x, u)
    return model.derivative(x, u)


def mechanical_energy(model: SystemModel, x: np.ndarray) -> FloatArray:
    """
    Total mechanical energy (kinetic + potential) of a state.

    Potential energy is measured with the pivot height as reference. Defined for the
    three mechanical benchmarks; the linear system returns x^2 / 2.
    """
    x = np.asarray(x, dtype=float)
    g = model.gravity

    if model.kind is SystemKind.CART_POLE:
        big_m, m, l = model.cart_mass, model.pole_mass, model.pole_length
        x_dot, theta, theta_dot = x[..., 1], x[..., 2], x[..., 3]
        kinetic = (0.5 * (big_m + m) * x_dot**2 + m * l * x_dot * theta_dot * np.cos(theta)
                   + 0.5 * m * l**2 * theta_dot**2)
        return kinetic - m * g * l * np.cos(theta)

    if model.kind is SystemKind.PENDUBOT:
        m1, m2, l1, l2 = model.pole_mass, model.pole_mass_2, model.pole_length, model.pole_length_2
        th1, th2, w1, w2 = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
        c2 = np.cos(th2)
        m11 = (m1 + m2) * l1**2 + m2 * l2**2 + 2.0 * m2 * l1 * l2 * c2
        m12 = m2 * l2**2 + m2 * l1 * l2 * c2
        m22 = m2 * l2**2
        kinetic = 0.5 * (m11 * w1**2 + 2.0 * m12 * w1 * w2 + m22 * w2**2)
        potential = -(m1 + m2) * g * l1 * np.cos(th1) - m2 * g * l2 * np.cos(th1 + th2)
        return kinetic + potential

    if model.kind is SystemKind.DOUBLE_CART_POLE:
        big_m, m1, m2 = model.cart_mass, model.pole_mass, model.pole_mass_2
        l1, l2 = model.pole_length, model.pole_length_2
        x_dot, th1, w1, th2, w2 = x[..., 1], x[..., 2], x[..., 3], x[..., 4], x[..., 5]
        kinetic = (0.5 * (big_m + m1 + m2) * x_dot**2
                   + (m1 + m2) * l1 * np.cos(th1) * x_dot * w1
                   + m2 * l2 * np.cos(th2) * x_dot * w2
                   + 0.5 * (m1 + m2) * l1**2 * w1**2
                   + m2 * l1 * l2 * np.cos(th1 - th2) * w1 * w2
                   + 0.5 * m2 * l2**2 * w2**2)
        potential = (m1 + m2) * g * l1 * np.cos(th1) + m2 * g * l2 * np.cos(th2)
        return kinetic + potential

    return 0.5 * x[..., 0] ** 2


def equilibrium(model: SystemModel, upright: bool) -> FloatArray:
    """Rest state with all links hanging down (upright=False) or balanced up (upright=True)."""
    if model.kind is SystemKind.CART_POLE:
        return np.array([0.0, 0.0, np.pi if upright else 0.0, 0.0])
    if model.kind is SystemKind.PENDUBOT:
        return np.array([np.pi if upright else 0.0, 0.0, 0.0, 0.0])
    if model.kind is SystemKind.DOUBLE_CART_POLE:
        angle = 0.0 if upright else np.pi
        return np.array([0.0, 0.0, angle, 0.0, angle, 0.0])
    return np.zeros(1)
