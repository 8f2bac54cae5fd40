"""
Experiment drivers: controller comparison, M/H/K ablations and multimodality probes.

Every episode runs a fresh controller built by a factory, so episodes are independent
and may run on worker threads; results are always assembled in episode order.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..control import (
    BehaviorCloneController,
    BehaviorClonePolicy,
    Controller,
    DiffusionController,
    LocalMpcController,
    MultistartMpcController,
    RolloutLog,
    closed_loop_rollout,
)
from ..datagen import sample_initial_guess, sample_initial_state
from ..diffusion import Denoiser, sample_sequences
from ..dynamics import FloatArray, SystemModel
from ..ocp import InputBox, OcpSpec
from ..solver import SolverConfig, solve_multistart
from .config import AblationKind, ConfigError, ExperimentConfig
from .metrics import ExperimentReport, loglog_slope, multimodality_percentage, summarize_logs

logger = logging.getLogger(__name__)

ControllerFactory = Callable[[], Controller]


class ArtifactNotFound(FileNotFoundError):
    """Raised when a dataset or checkpoint an experiment needs does not exist."""
    pass


@dataclass
class Artifacts:
    """Trained models an experiment may use; missing ones stay None."""
    denoiser: Optional[Denoiser] = None
    policy: Optional[BehaviorClonePolicy] = None
    global_policy: Optional[BehaviorClonePolicy] = None


# =============================================================================
# Samplers
# =============================================================================

@dataclass
class DiffusionSampler:
    denoiser: Denoiser
    guidance_w: float = 0.0
    steps: Optional[int] = None
    box: Optional[InputBox] = None

    def draw(self, state: np.ndarray, count: int, rng: np.random.Generator) -> FloatArray:
        return sample_sequences(self.denoiser, state, count, rng, self.guidance_w, self.steps, self.box)


@dataclass
class MultistartSampler:
    """Locally optimal sequences from `count` uniform random guesses (one solve each)."""
    spec: OcpSpec
    model: SystemModel
    solver_cfg: SolverConfig
    amplitude: float

    def draw(self, state: np.ndarray, count: int, rng: np.random.Generator) -> FloatArray:
        guesses = [sample_initial_guess(self.amplitude, self.spec.horizon, self.spec.n_u, rng)
                   for _ in range(count)]
        outcome = solve_multistart(self.spec, self.model, state, guesses, self.solver_cfg)
        return np.stack([result.sequence for result in outcome.results])


# =============================================================================
# Controllers and episodes
# =============================================================================

def controller_factories(
    cfg: ExperimentConfig,
    artifacts: Artifacts,
    names: Sequence[str],
    solver_cfg: Optional[SolverConfig] = None,
) -> Dict[str, ControllerFactory]:
    """
    Build one factory per requested controller name.

    Raises:
        ArtifactNotFound: If a learned controller is requested without its model
    """
    spec, model = cfg.spec, cfg.system
    solver_cfg = solver_cfg or cfg.solver
    factories: Dict[str, ControllerFactory] = {}
    for name in names:
        if name == "diffusion":
            if artifacts.denoiser is None:
                raise ArtifactNotFound("The diffusion controller needs a trained denoiser")
            denoiser = artifacts.denoiser
            factories[name] = lambda d=denoiser: DiffusionController(d, spec, model, cfg.control)
        elif name == "local_mpc":
            factories[name] = lambda: LocalMpcController(spec, model, solver_cfg)
        elif name == "multistart_mpc":
            factories[name] = lambda: MultistartMpcController(spec, model, solver_cfg, cfg.control)
        elif name in ("behavior_clone", "behavior_clone_global"):
            policy = artifacts.policy if name == "behavior_clone" else artifacts.global_policy
            if policy is None:
                raise ArtifactNotFound(f"The {name} controller needs a trained policy")
            factories[name] = lambda p=policy, n=name: BehaviorCloneController(p, spec, model, n)
        else:
            raise ValueError(f"Unknown controller '{name}'")
    return factories


def initial_states(cfg: ExperimentConfig, count: int, seed: int) -> FloatArray:
    """`count` initial states drawn from the initial-state box on their own stream."""
    rng = np.random.default_rng([seed, 7])
    return np.stack([sample_initial_state(cfg.datagen.chi, rng) for _ in range(count)])


def episode_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def run_episodes(
    factory: ControllerFactory,
    model: SystemModel,
    states: np.ndarray,
    steps: int,
    seed: int,
    workers: int = 1,
) -> List[RolloutLog]:
    """One closed-loop rollout per initial state, in state order."""
    def run(index: int) -> RolloutLog:
        return closed_loop_rollout(factory(), model, states[index], steps, episode_seed(seed, index))

    if workers > 1 and len(states) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, range(len(states))))
    return [run(index) for index in range(len(states))]


def _evaluate(
    report: ExperimentReport,
    cfg: ExperimentConfig,
    factories: Dict[str, ControllerFactory],
    states: np.ndarray,
    steps: int,
    seed: int,
    workers: int,
    parameter: str = "",
    value: float = float("nan"),
) -> None:
    for name, factory in factories.items():
        logs = run_episodes(factory, cfg.system, states, steps, seed, workers)
        successes = [log.succeeded(cfg.system) for log in logs]
        row = summarize_logs(logs, successes, cfg.system.kind.value, name, seed, cfg.digest(),
                             parameter, value)
        report.add(row, [log.total_cost for log in logs])
        logger.info("%s%s: median cost %.4g, success %.0f%%", name,
                    f" ({parameter}={value:g})" if parameter else "", row.cost_median,
                    100.0 * row.success_rate)


# =============================================================================
# Comparison and ablations
# =============================================================================

def run_comparison(
    cfg: ExperimentConfig,
    factories: Dict[str, ControllerFactory],
    episodes: Optional[int] = None,
    steps: Optional[int] = None,
    seed: Optional[int] = None,
    workers: int = 1,
) -> ExperimentReport:
    """
    Closed-loop cost, success and timing of every controller from shared initial states.

    Args:
        cfg: Experiment configuration
        factories: Controller name -> factory
        episodes: Number of initial states N (default: `[control] episodes`)
        steps: Steps per episode S (default: `[control] steps`)
        seed: Experiment seed (default: the config seed)
        workers: Episode threads

    Returns:
        Finalized report, one row per controller
    """
    if not factories:
        raise ValueError("run_comparison needs at least one controller")
    seed = cfg.seed if seed is None else seed
    states = initial_states(cfg, episodes or cfg.control.episodes, seed)
    report = ExperimentReport()
    _evaluate(report, cfg, factories, states, steps or cfg.control.steps, seed, workers)
    return report.finalize()


ABLATION_CONTROLLERS = {
    AblationKind.M: ["diffusion", "multistart_mpc"],
    AblationKind.H: ["diffusion"],
    AblationKind.K: ["diffusion"],
}


def ablation_point(cfg: ExperimentConfig, kind: AblationKind, value: int) -> ExperimentConfig:
    """Configuration of one grid point."""
    if kind is AblationKind.M:
        return cfg.updated("control", candidates=value, restarts=value)
    if kind is AblationKind.H:
        return cfg.updated("ocp", horizon=value)
    if value > cfg.diffusion.diffusion_steps:
        raise ConfigError(f"K={value} exceeds the trained chain length {cfg.diffusion.diffusion_steps}")
    return cfg.updated("control", inference_steps=value)


def run_ablation(
    cfg: ExperimentConfig,
    kind: AblationKind,
    grid: Sequence[int],
    resolve_artifacts: Callable[[ExperimentConfig], Artifacts],
    episodes: Optional[int] = None,
    seed: Optional[int] = None,
    workers: int = 1,
    solver_cfg: Optional[SolverConfig] = None,
) -> ExperimentReport:
    """
    Sweep M, H or K over `grid`.

    The M sweep runs diffusion and multistart MPC with M candidates / restarts; the H sweep
    uses a denoiser trained for each horizon (resolved by `resolve_artifacts`); the K sweep
    respaces the trained reverse chain to K steps. Every point uses the same initial states.

    Raises:
        ValueError: On an empty grid
        ArtifactNotFound: If `resolve_artifacts` cannot provide a model
    """
    if not grid:
        raise ValueError("Ablation grid must not be empty")
    seed = cfg.seed if seed is None else seed
    states = initial_states(cfg, episodes or cfg.ablation.episodes, seed)
    report = ExperimentReport()
    for value in sorted(set(grid)):
        point = ablation_point(cfg, kind, value)
        factories = controller_factories(point, resolve_artifacts(point), ABLATION_CONTROLLERS[kind],
                                         solver_cfg)
        _evaluate(report, point, factories, states, cfg.control.steps, seed, workers,
                  kind.value, float(value))
    return report.finalize()


def timing_slopes(report: ExperimentReport) -> Dict[str, float]:
    """Log-log slope of mean step time against the ablated parameter, per controller."""
    slopes: Dict[str, float] = {}
    for name in sorted({row.controller for row in report.rows}):
        rows = [row for row in report.rows if row.controller == name]
        if len(rows) >= 2:
            slopes[name] = loglog_slope([r.value for r in rows], [r.time_mean for r in rows])
    return slopes


# =============================================================================
# Multimodality
# =============================================================================

def probe_states(logs: Sequence[RolloutLog], steps: int) -> FloatArray:
    """
    Stack rollout states into (steps, P, n_x).

    Episodes that ended early repeat their last state.
    """
    columns = []
    for log in logs:
        states = log.states[:steps]
        if len(states) < steps:
            states = np.concatenate([states, np.repeat(states[-1:], steps - len(states), axis=0)])
        columns.append(states)
    return np.stack(columns, axis=1)


def multimodality_curves(
    cfg: ExperimentConfig,
    denoiser: Denoiser,
    seed: Optional[int] = None,
    workers: int = 1,
    solver_cfg: Optional[SolverConfig] = None,
) -> Dict[str, FloatArray]:
    """
    Multimodality percentage along diffusion-controller rollouts, for the diffusion model
    and for the multistart solver at the same probe states.
    """
    seed = cfg.seed if seed is None else seed
    mm = cfg.multimodality
    spec, model = cfg.spec, cfg.system
    solver_cfg = solver_cfg or cfg.solver
    states = initial_states(cfg, mm.probe_episodes, seed)
    logs = run_episodes(lambda: DiffusionController(denoiser, spec, model, cfg.control), model, states,
                        mm.probe_steps, seed, workers)
    probes = probe_states(logs, mm.probe_steps)
    threshold = mm.resolved_threshold(spec)
    logger.info("Multimodality threshold %.4g over %d x %d probes", threshold, *probes.shape[:2])

    diffusion = DiffusionSampler(denoiser, cfg.control.guidance_w, cfg.control.inference_steps, spec.box)
    multistart = MultistartSampler(spec, model, solver_cfg, cfg.control.guess_amplitude)
    return {
        "diffusion": multimodality_percentage(diffusion, probes, mm.samples, threshold,
                                              np.random.default_rng([seed, 11])),
        "multistart": multimodality_percentage(multistart, probes, mm.samples, threshold,
                                               np.random.default_rng([seed, 12])),
    }
