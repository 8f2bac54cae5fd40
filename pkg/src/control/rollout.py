"""
Closed-loop rollout harness and its log.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Union

import numpy as np
import pandas as pd

from ..dynamics import FloatArray, IntegrationBlowUp, SystemModel, step
from ..ocp import OcpSpec, stage_cost, terminal_cost, upright_error
from ..solver import SolveDiverged
from .controllers import Controller, StepDecision

logger = logging.getLogger(__name__)

SUCCESS_TOLERANCE = 0.2


@dataclass
class RolloutLog:
    """
    Per-step record of one closed-loop episode.

    `states` has one more row than `inputs`; when the episode aborts early the arrays
    stop at the last finite state.
    """
    controller: str
    states: FloatArray
    inputs: FloatArray
    chosen_costs: FloatArray
    candidate_costs: List[FloatArray]
    wall_times: FloatArray
    total_cost: float
    aborted: bool = False
    seed: int = 0
    decisions: List[StepDecision] = field(default_factory=list, repr=False)

    @property
    def steps(self) -> int:
        return int(self.inputs.shape[0])

    def final_upright_error(self, model: SystemModel) -> float:
        return float(upright_error(model.kind, self.states[-1]))

    def succeeded(self, model: SystemModel, tolerance: float = SUCCESS_TOLERANCE) -> bool:
        return not self.aborted and self.final_upright_error(model) < tolerance

    def to_frame(self) -> pd.DataFrame:
        """One row per step: applied input, state before the step, costs, wall time."""
        n_x = self.states.shape[1]
        frame = pd.DataFrame({"step": np.arange(self.steps)})
        for k in range(self.inputs.shape[1]):
            frame[f"u{k}"] = self.inputs[:, k]
        for k in range(n_x):
            frame[f"x{k}"] = self.states[:-1, k]
        frame["chosen_cost"] = self.chosen_costs
        frame["candidate_costs"] = [";".join(f"{c:.17g}" for c in costs) for costs in self.candidate_costs]
        frame["wall_time"] = self.wall_times
        return frame

    def write(self, path: Union[str, Path], include_timing: bool = True) -> None:
        frame = self.to_frame()
        if not include_timing:
            frame = frame.drop(columns=["wall_time"])
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.17g")


def closed_loop_cost(spec: OcpSpec, states: np.ndarray, inputs: np.ndarray) -> float:
    """Sum of stage costs along the realized trajectory plus the terminal cost."""
    stages = float(np.sum(stage_cost(spec, states[:-1], inputs))) if len(inputs) else 0.0
    return stages + float(terminal_cost(spec, states[-1]))


def closed_loop_rollout(
    controller: Controller,
    model: SystemModel,
    x0: np.ndarray,
    steps: int,
    seed: int = 0,
) -> RolloutLog:
    """
    Alternate controller decisions and plant steps.

    Args:
        controller: Controller (reset with `seed` before the episode)
        model: Simulated plant
        x0: Initial state
        steps: Number of closed-loop steps S >= 1
        seed: Episode seed for stochastic controllers

    Returns:
        RolloutLog; on a non-finite state or a diverged online solve the log is
        truncated and `aborted` is set
    """
    if steps < 1:
        raise ValueError("A rollout needs at least one step")
    controller.reset(seed)
    x = np.asarray(x0, dtype=float)
    states, inputs, decisions = [x], [], []
    aborted = False
    for t in range(steps):
        try:
            decision = controller.act(x)
        except SolveDiverged as exc:
            logger.warning("%s: rollout aborted at step %d (%s)", controller.name, t, exc)
            aborted = True
            break
        try:
            x_next = step(model, x, decision.applied)
        except IntegrationBlowUp:
            logger.warning("%s: rollout aborted at step %d (non-finite state)", controller.name, t)
            aborted = True
            break
        decisions.append(decision)
        inputs.append(decision.applied)
        states.append(x_next)
        x = x_next

    state_arr = np.asarray(states)
    input_arr = np.asarray(inputs, dtype=float).reshape(-1, model.n_u)
    total = closed_loop_cost(controller.spec, state_arr, input_arr)
    return RolloutLog(
        controller=controller.name,
        states=state_arr,
        inputs=input_arr,
        chosen_costs=np.array([d.chosen_cost for d in decisions]),
        candidate_costs=[d.candidate_costs for d in decisions],
        wall_times=np.array([d.wall_time for d in decisions]),
        total_cost=total,
        aborted=aborted,
        seed=seed,
        decisions=decisions,
    )
