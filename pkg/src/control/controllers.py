"""
Online Controllers

Every controller maps a measured state to the input applied for one sampling
interval. The diffusion controller samples M candidate sequences, scores each
with the true cost and applies the first input of the cheapest; the MPC
baselines solve the OCP online; the behavior clone evaluates a regression net.
"""
import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..datagen import sample_initial_guess
from ..diffusion import Denoiser, sample_sequences
from ..dynamics import FloatArray, SystemModel
from ..ocp import OcpSpec, evaluate_costs
from ..solver import (
    SolveDiverged,
    SolverConfig,
    shift_warm_start,
    solve_local,
    solve_multistart,
)
from .behavior_clone import BehaviorClonePolicy

logger = logging.getLogger(__name__)


class ControllerConfig(BaseModel):
    """
    Online settings shared by the controllers.

    `guess_amplitude` is the multistart guess range at the first step of an episode;
    afterwards the range follows max(|applied input|, `phi_floor`).
    """
    model_config = ConfigDict(frozen=True)

    candidates: int = Field(default=5, ge=1)
    guidance_w: float = 0.0
    inference_steps: Optional[int] = Field(default=None, ge=1)
    restarts: int = Field(default=20, ge=1)
    guess_amplitude: float = Field(default=10.0, ge=0.0)
    phi_floor: float = Field(default=0.0, ge=0.0)
    steps: int = Field(default=50, ge=1)
    seed: int = 0


@dataclass
class StepDecision:
    """
    What a controller decided at one state.

    `candidate_costs` holds the score of every candidate in candidate order;
    `chosen_index` points at the applied one.
    """
    applied: FloatArray
    chosen_cost: float
    candidate_costs: FloatArray
    chosen_index: int = 0
    iterations: int = 0
    wall_time: float = 0.0


def select_candidate(costs: np.ndarray) -> int:
    """Index of the cheapest candidate; ties go to the lowest index."""
    return int(np.argmin(np.asarray(costs, dtype=float)))


# =============================================================================
# Single-step operations
# =============================================================================

def diffusion_mpc_step(
    denoiser: Denoiser,
    spec: OcpSpec,
    model: SystemModel,
    x_t: np.ndarray,
    cfg: ControllerConfig,
    rng: np.random.Generator,
) -> Tuple[FloatArray, StepDecision]:
    """
    Sample, score and rank M candidate sequences.

    Args:
        denoiser: Trained denoiser for this OCP
        spec: OCP used for scoring
        model: Plant used for scoring
        x_t: Measured state
        cfg: Candidate count, guidance weight and reverse-chain length
        rng: Random stream for the sampler

    Returns:
        A tuple (applied input, decision)
    """
    candidates = sample_sequences(denoiser, x_t, cfg.candidates, rng, cfg.guidance_w,
                                  cfg.inference_steps, spec.box)
    costs = evaluate_costs(spec, model, x_t, candidates)
    best = select_candidate(costs)
    applied = candidates[best, 0].copy()
    return applied, StepDecision(applied, float(costs[best]), costs, best)


def local_mpc_step(
    spec: OcpSpec,
    model: SystemModel,
    x_t: np.ndarray,
    previous: Optional[np.ndarray],
    cfg: SolverConfig,
) -> Tuple[FloatArray, FloatArray, StepDecision]:
    """
    Warm-started local MPC.

    Args:
        previous: Solution of the previous step (shifted here) or None for a zero guess

    Returns:
        A tuple (applied input, solution to pass as `previous` next step, decision)

    Raises:
        SolveDiverged: If the solve ends without a finite cost
    """
    guess = np.zeros((spec.horizon, spec.n_u)) if previous is None else shift_warm_start(previous)
    result = solve_local(spec, model, x_t, guess, cfg)
    if not np.isfinite(result.cost):
        raise SolveDiverged(f"Local MPC solve diverged from state {np.asarray(x_t).tolist()}")
    applied = result.sequence[0].copy()
    decision = StepDecision(applied, result.cost, np.array([result.cost]), 0, result.iterations)
    return applied, result.sequence, decision


def multistart_mpc_step(
    spec: OcpSpec,
    model: SystemModel,
    x_t: np.ndarray,
    restarts: int,
    cfg: SolverConfig,
    amplitude: float,
    rng: np.random.Generator,
) -> Tuple[FloatArray, StepDecision]:
    """
    Global MPC by random restarts: `restarts` uniform guesses, one local solve each.

    Raises:
        AllSolvesDiverged: If no start yields a finite cost
    """
    guesses = [sample_initial_guess(amplitude, spec.horizon, spec.n_u, rng) for _ in range(restarts)]
    outcome = solve_multistart(spec, model, x_t, guesses, cfg)
    costs = np.array([r.cost for r in outcome.results])
    applied = outcome.best.sequence[0].copy()
    iterations = sum(r.iterations for r in outcome.results)
    return applied, StepDecision(applied, outcome.best.cost, costs, outcome.best_index, iterations)


# =============================================================================
# Controller objects
# =============================================================================

class Controller(ABC):
    """
    Base class for receding-horizon controllers.

    `act` is the only entry point used by the rollout harness; it times the
    decision and fills in the wall time. Subclasses implement `_decide`.
    """

    def __init__(self, name: str, spec: OcpSpec, model: SystemModel):
        self.name = name
        self.spec = spec
        self.model = model
        self.counters: Dict[str, int] = {"steps": 0, "cost_rollouts": 0, "local_solves": 0,
                                         "reverse_steps": 0}

    def act(self, x: np.ndarray) -> StepDecision:
        """Decide the input for state x."""
        started = time.perf_counter()
        decision = self._decide(np.asarray(x, dtype=float))
        decision.wall_time = time.perf_counter() - started
        self.counters["steps"] += 1
        return decision

    @abstractmethod
    def _decide(self, x: np.ndarray) -> StepDecision:
        pass

    def reset(self, seed: Optional[int] = None) -> None:
        """Clear per-episode state; stochastic controllers reseed (config seed if None)."""
        for key in self.counters:
            self.counters[key] = 0


class DiffusionController(Controller):
    def __init__(self, denoiser: Denoiser, spec: OcpSpec, model: SystemModel, cfg: ControllerConfig):
        super().__init__("diffusion", spec, model)
        self.denoiser = denoiser
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)

    def _decide(self, x: np.ndarray) -> StepDecision:
        before = self.denoiser.counters["reverse_steps"]
        _, decision = diffusion_mpc_step(self.denoiser, self.spec, self.model, x, self.cfg, self.rng)
        self.counters["reverse_steps"] += self.denoiser.counters["reverse_steps"] - before
        self.counters["cost_rollouts"] += self.cfg.candidates
        return decision

    def reset(self, seed: Optional[int] = None) -> None:
        super().reset(seed)
        self.rng = np.random.default_rng(self.cfg.seed if seed is None else seed)


class LocalMpcController(Controller):
    def __init__(self, spec: OcpSpec, model: SystemModel, solver_cfg: SolverConfig):
        super().__init__("local_mpc", spec, model)
        self.solver_cfg = solver_cfg
        self.previous: Optional[np.ndarray] = None

    def _decide(self, x: np.ndarray) -> StepDecision:
        _, self.previous, decision = local_mpc_step(self.spec, self.model, x, self.previous,
                                                    self.solver_cfg)
        self.counters["local_solves"] += 1
        return decision

    def reset(self, seed: Optional[int] = None) -> None:
        super().reset(seed)
        self.previous = None


class MultistartMpcController(Controller):
    def __init__(self, spec: OcpSpec, model: SystemModel, solver_cfg: SolverConfig,
                 cfg: ControllerConfig):
        super().__init__("multistart_mpc", spec, model)
        self.solver_cfg = solver_cfg
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.amplitude = cfg.guess_amplitude

    def _decide(self, x: np.ndarray) -> StepDecision:
        _, decision = multistart_mpc_step(self.spec, self.model, x, self.cfg.restarts,
                                          self.solver_cfg, self.amplitude, self.rng)
        self.counters["local_solves"] += self.cfg.restarts
        self.amplitude = max(float(np.max(np.abs(decision.applied))), self.cfg.phi_floor)
        return decision

    def reset(self, seed: Optional[int] = None) -> None:
        super().reset(seed)
        self.rng = np.random.default_rng(self.cfg.seed if seed is None else seed)
        self.amplitude = self.cfg.guess_amplitude


class BehaviorCloneController(Controller):
    def __init__(self, policy: BehaviorClonePolicy, spec: OcpSpec, model: SystemModel,
                 name: str = "behavior_clone"):
        super().__init__(name, spec, model)
        self.policy = policy

    def _decide(self, x: np.ndarray) -> StepDecision:
        sequence = self.policy.predict_feasible(x, self.spec)
        cost = float(evaluate_costs(self.spec, self.model, x, sequence[None])[0])
        self.counters["cost_rollouts"] += 1
        applied = sequence[0].copy()
        return StepDecision(applied, cost, np.array([cost]))


class ConstantController(Controller):
    """Applies a fixed input; used for open-loop checks."""

    def __init__(self, spec: OcpSpec, model: SystemModel, value: np.ndarray):
        super().__init__("constant", spec, model)
        self.value = np.asarray(value, dtype=float)

    def _decide(self, x: np.ndarray) -> StepDecision:
        sequence = np.broadcast_to(self.value, (self.spec.horizon, self.spec.n_u))
        cost = float(evaluate_costs(self.spec, self.model, x, sequence[None])[0])
        return StepDecision(self.value.copy(), cost, np.array([cost]))
