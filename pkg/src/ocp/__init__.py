"""Optimal control problem definition, cost evaluation and adjoint gradient."""
from .adjoint import cost_and_gradient, cost_gradient
from .problem import (
    DEFAULT_TRANSFORMS,
    InputBox,
    NonFiniteCost,
    OcpSpec,
    TransformKind,
    cost_from_states,
    evaluate_costs,
    nonlinear_transform,
    stage_cost,
    terminal_cost,
    total_cost,
    transform_derivative,
    upright_error,
    wrap_angle,
)

__all__ = [
    "DEFAULT_TRANSFORMS",
    "InputBox",
    "NonFiniteCost",
    "OcpSpec",
    "TransformKind",
    "cost_and_gradient",
    "cost_from_states",
    "cost_gradient",
    "evaluate_costs",
    "nonlinear_transform",
    "stage_cost",
    "terminal_cost",
    "total_cost",
    "transform_derivative",
    "upright_error",
    "wrap_angle",
]
