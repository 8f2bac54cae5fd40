"""Plant models and their RK4 discretization."""
from .integrator import (
    IntegrationBlowUp,
    field_jacobians,
    rk4_step,
    rollout_states,
    rollout_unchecked,
    rollout_with_stages,
    step,
)
from .models import (
    DimensionMismatch,
    FloatArray,
    SystemKind,
    SystemModel,
    continuous_derivative,
    equilibrium,
    mechanical_energy,
)

__all__ = [
    "DimensionMismatch",
    "FloatArray",
    "IntegrationBlowUp",
    "SystemKind",
    "SystemModel",
    "continuous_derivative",
    "equilibrium",
    "field_jacobians",
    "mechanical_energy",
    "rk4_step",
    "rollout_states",
    "rollout_unchecked",
    "rollout_with_stages",
    "step",
]
