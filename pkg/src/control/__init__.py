"""Online controllers and the closed-loop harness."""
from .behavior_clone import (
    BehaviorCloneConfig,
    BehaviorClonePolicy,
    load_policy,
    save_policy,
    train_behavior_clone,
)
from .controllers import (
    BehaviorCloneController,
    ConstantController,
    Controller,
    ControllerConfig,
    DiffusionController,
    LocalMpcController,
    MultistartMpcController,
    StepDecision,
    diffusion_mpc_step,
    local_mpc_step,
    multistart_mpc_step,
    select_candidate,
)
from .rollout import SUCCESS_TOLERANCE, RolloutLog, closed_loop_cost, closed_loop_rollout

__all__ = [
    "SUCCESS_TOLERANCE",
    "BehaviorCloneConfig",
    "BehaviorCloneController",
    "BehaviorClonePolicy",
    "ConstantController",
    "Controller",
    "ControllerConfig",
    "DiffusionController",
    "LocalMpcController",
    "MultistartMpcController",
    "RolloutLog",
    "StepDecision",
    "closed_loop_cost",
    "closed_loop_rollout",
    "diffusion_mpc_step",
    "load_policy",
    "local_mpc_step",
    "multistart_mpc_step",
    "save_policy",
    "select_candidate",
    "train_behavior_clone",
]
