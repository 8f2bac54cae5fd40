"""
Optimizer-Based Data Generation

Builds the dataset of (perturbed state, locally optimal control sequence) pairs:
nominal trajectories start from the initial-state box, every visited state is
perturbed N_p times, and each perturbed state is solved from a fresh uniform guess.

Random streams are derived from (seed, j) for initial states and from
(seed, j, t, i) for each record, so the output does not depend on how the inner
solves are scheduled.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .. import __version__
from ..dynamics import FloatArray, IntegrationBlowUp, SystemModel, step
from ..ocp import OcpSpec
from ..solver import (
    AllSolvesDiverged,
    SolveResult,
    SolverConfig,
    project_box,
    solve_local,
    solve_multistart,
)
from ..utils.fields import FloatList, IntervalList

logger = logging.getLogger(__name__)


class NextStateRule(str, Enum):
    """How the nominal trajectory advances after the perturbation solves of a step."""
    # x_{t+1} = f(x_t^d, u_0(x_t^d)) using the last perturbed solve
    LAST_PERTURBED = "last_perturbed"
    # x_{t+1} = f(x_t, u_0(x_t)) from an extra solve at the unperturbed state
    NOMINAL = "nominal"


class GenConfig(BaseModel):
    """Sample counts, perturbation schedule, initial-state box and guess range."""
    model_config = ConfigDict(frozen=True)

    n_s: int = Field(ge=1)
    n_t: int = Field(ge=1)
    n_p: int = Field(ge=1)
    sigma: FloatList
    sigma_decay: float = Field(default=1.0, gt=0.0)
    chi: IntervalList
    phi_initial: float = Field(default=1.0, ge=0.0)
    phi_floor: float = Field(default=0.0, ge=0.0)
    seed: int = 0
    next_state: NextStateRule = NextStateRule.LAST_PERTURBED
    drop_unconverged: bool = False
    restarts: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_ranges(self) -> "GenConfig":
        if any(s < 0 for s in self.sigma):
            raise ValueError("sigma must be non-negative")
        for interval in self.chi:
            if len(interval) != 2 or interval[0] > interval[1]:
                raise ValueError(f"Invalid initial-state interval {interval}")
        return self

    def sigma_at(self, t: int, n_x: int) -> FloatArray:
        """Per-dimension perturbation std at trajectory step t."""
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.size == 1:
            sigma = np.full(n_x, sigma[0])
        elif sigma.size != n_x:
            raise ValueError(f"sigma has {sigma.size} entries, state dimension is {n_x}")
        return sigma * self.sigma_decay ** t

    @property
    def record_budget(self) -> int:
        return self.n_s * self.n_t * self.n_p


@dataclass
class DatasetRecord:
    state: FloatArray
    sequence: FloatArray
    cost: float
    converged: bool
    trajectory_id: int
    step_index: int
    perturbation_index: int


@dataclass(eq=False)
class Dataset:
    """
    Column-stored dataset.

    Attributes:
        header: System, OCP, generator and solver settings plus the record count
        states: (N, n_x) perturbed states
        sequences: (N, H, n_u) locally optimal sequences
        costs: (N,) costs of the sequences
        converged: (N,) solver convergence flags
        indices: (N, 3) provenance (trajectory, step, perturbation)
    """
    header: Dict[str, Any]
    states: FloatArray
    sequences: FloatArray
    costs: FloatArray
    converged: np.ndarray
    indices: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __len__(self) -> int:
        return int(self.states.shape[0])

    def take(self, rows: np.ndarray) -> "Dataset":
        """Dataset restricted to `rows` (index array or boolean mask); the header count follows."""
        rows = np.asarray(rows)
        states = self.states[rows]
        header = {**self.header, "record_count": int(states.shape[0])}
        return Dataset(header, states, self.sequences[rows], self.costs[rows],
                       self.converged[rows], self.indices[rows])

    @property
    def records(self) -> List[DatasetRecord]:
        return [
            DatasetRecord(
                state=self.states[n],
                sequence=self.sequences[n],
                cost=float(self.costs[n]),
                converged=bool(self.converged[n]),
                trajectory_id=int(self.indices[n, 0]),
                step_index=int(self.indices[n, 1]),
                perturbation_index=int(self.indices[n, 2]),
            )
            for n in range(len(self))
        ]

    def statistics(self) -> Dict[str, float]:
        """Record count, converged fraction and cost quantiles."""
        if len(self) == 0:
            return {"records": 0, "converged_fraction": 0.0}
        q25, q50, q75 = np.quantile(self.costs, [0.25, 0.5, 0.75])
        return {
            "records": len(self),
            "converged_fraction": float(np.mean(self.converged)),
            "cost_min": float(np.min(self.costs)),
            "cost_q25": float(q25),
            "cost_median": float(q50),
            "cost_q75": float(q75),
            "cost_max": float(np.max(self.costs)),
        }


# =============================================================================
# Sampling primitives
# =============================================================================

def sample_initial_guess(
    amplitude: float, horizon: int, n_u: int, rng: np.random.Generator
) -> FloatArray:
    """
    Draw a guess with i.i.d. entries uniform on [-amplitude, amplitude].

    Args:
        amplitude: Guess range u_bar (>= 0); zero yields the zero sequence
        horizon: H
        n_u: Input dimension
        rng: Random stream

    Returns:
        Sequence of shape (H, n_u)
    """
    if amplitude < 0:
        raise ValueError(f"Guess amplitude must be non-negative, got {amplitude}")
    if amplitude == 0:
        return np.zeros((horizon, n_u))
    return rng.uniform(-amplitude, amplitude, size=(horizon, n_u))


def perturb_state(x: np.ndarray, sigma_t: np.ndarray, rng: np.random.Generator) -> FloatArray:
    """Return x + eps with eps ~ N(0, diag(sigma_t^2)); sigma_t = 0 returns x exactly."""
    x = np.asarray(x, dtype=float)
    sigma_t = np.broadcast_to(np.asarray(sigma_t, dtype=float), x.shape)
    if np.any(sigma_t < 0):
        raise ValueError("Perturbation std must be non-negative")
    noise = rng.standard_normal(x.shape)
    return np.where(sigma_t > 0, x + sigma_t * noise, x)


def sample_initial_state(chi: List[List[float]], rng: np.random.Generator) -> FloatArray:
    """Uniform draw from the initial-state box (degenerate intervals stay fixed)."""
    bounds = np.asarray(chi, dtype=float)
    draw = rng.uniform(bounds[:, 0], bounds[:, 1])
    return np.where(bounds[:, 0] == bounds[:, 1], bounds[:, 0], draw)


def budget_matched_config(gen: GenConfig, restarts: int) -> GenConfig:
    """
    Reduce N_p, then N_s, so that multistart targets with `restarts` solves each use
    no more local solves than the original configuration.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    n_p = max(1, gen.n_p // restarts)
    per_trajectory = gen.n_t * n_p * restarts
    n_s = max(1, gen.record_budget // per_trajectory)
    return gen.model_copy(update={"n_p": n_p, "n_s": n_s, "restarts": restarts})


# =============================================================================
# Generation
# =============================================================================

def _solve_record(
    model: SystemModel,
    spec: OcpSpec,
    gen: GenConfig,
    solver_cfg: SolverConfig,
    x_nominal: np.ndarray,
    sigma_t: np.ndarray,
    amplitude: float,
    key: List[int],
) -> tuple:
    rng = np.random.default_rng(key)
    x_d = perturb_state(x_nominal, sigma_t, rng)
    if gen.restarts == 1:
        guess = sample_initial_guess(amplitude, spec.horizon, spec.n_u, rng)
        return x_d, solve_local(spec, model, x_d, guess, solver_cfg)
    guesses = [sample_initial_guess(amplitude, spec.horizon, spec.n_u, rng)
               for _ in range(gen.restarts)]
    try:
        return x_d, solve_multistart(spec, model, x_d, guesses, solver_cfg).best
    except AllSolvesDiverged:
        return x_d, SolveResult(project_box(guesses[0], spec.box), float("inf"), 0, False,
                                float("inf"), 0.0)


def _apply_input(model: SystemModel, x: np.ndarray, result: SolveResult) -> tuple:
    applied = result.sequence[0]
    return step(model, x, applied), applied


def _last_finite(
    solved: Sequence[Tuple[np.ndarray, SolveResult]],
) -> Optional[Tuple[np.ndarray, SolveResult]]:
    """Latest perturbation solve with a finite cost, or None."""
    for x_d, result in reversed(solved):
        if np.isfinite(result.cost):
            return x_d, result
    return None


def generate_dataset(
    model: SystemModel,
    spec: OcpSpec,
    gen: GenConfig,
    solver_cfg: SolverConfig,
    header_extra: Optional[Dict[str, Any]] = None,
) -> Dataset:
    """
    Run the perturbed-trajectory data generation loop.

    Args:
        model: Plant
        spec: OCP solved at every perturbed state
        gen: Sample counts and distributions
        solver_cfg: Local solver settings; `workers` parallelizes the perturbation solves
        header_extra: Additional header entries (e.g. config digest)

    Returns:
        Dataset with records sorted by (trajectory, step, perturbation). A trajectory
        ends early when no solve of a step has a finite cost or the plant diverges.

    Raises:
        ValueError: If chi does not match the state dimension
    """
    if len(gen.chi) != model.n_x:
        raise ValueError(f"chi has {len(gen.chi)} intervals, state dimension is {model.n_x}")

    inner_cfg = solver_cfg.model_copy(update={"workers": 1})
    pool = ThreadPoolExecutor(max_workers=solver_cfg.workers) if solver_cfg.workers > 1 else None

    states, sequences, costs, converged, indices = [], [], [], [], []
    try:
        for j in range(gen.n_s):
            x = sample_initial_state(gen.chi, np.random.default_rng([gen.seed, j]))
            amplitude = gen.phi_initial
            for t in range(gen.n_t):
                sigma_t = gen.sigma_at(t, model.n_x)
                keys = [[gen.seed, j, t, i] for i in range(gen.n_p)]
                jobs = [(model, spec, gen, inner_cfg, x, sigma_t, amplitude, key) for key in keys]
                if pool is not None:
                    solved = list(pool.map(lambda job: _solve_record(*job), jobs))
                else:
                    solved = [_solve_record(*job) for job in jobs]

                for i, (x_d, result) in enumerate(solved):
                    if gen.drop_unconverged and not result.converged:
                        continue
                    states.append(x_d)
                    sequences.append(result.sequence)
                    costs.append(result.cost)
                    converged.append(result.converged)
                    indices.append((j, t, i))

                if gen.next_state is NextStateRule.NOMINAL:
                    nominal_rng = np.random.default_rng([gen.seed, j, t, gen.n_p])
                    guess = sample_initial_guess(amplitude, spec.horizon, spec.n_u, nominal_rng)
                    result = solve_local(spec, model, x, guess, inner_cfg)
                    source = (x, result) if np.isfinite(result.cost) else None
                else:
                    source = _last_finite(solved)
                    if source is not None and source[1] is not solved[-1][1]:
                        logger.warning("Trajectory %d step %d: last perturbed solve diverged, "
                                       "advancing from the latest finite one", j, t)
                if source is None:
                    logger.warning("Trajectory %d ended at step %d: no finite solve to apply", j, t)
                    break
                try:
                    x, applied = _apply_input(model, *source)
                except IntegrationBlowUp:
                    logger.warning("Trajectory %d ended at step %d: nominal state diverged", j, t)
                    break
                amplitude = max(float(np.max(np.abs(applied))), gen.phi_floor)

            logger.info("Trajectory %d/%d done, %d records so far", j + 1, gen.n_s, len(states))
    finally:
        if pool is not None:
            pool.shutdown()

    n_x, horizon, n_u = model.n_x, spec.horizon, spec.n_u
    header = {
        "generator": __version__,
        "system": model.model_dump(mode="json"),
        "ocp": spec.model_dump(mode="json"),
        "ocp_digest": spec.digest(),
        "gen": gen.model_dump(mode="json"),
        "solver": solver_cfg.model_dump(mode="json"),
        "record_count": len(states),
        **(header_extra or {}),
    }
    dataset = Dataset(
        header=header,
        states=np.asarray(states, dtype=float).reshape(-1, n_x),
        sequences=np.asarray(sequences, dtype=float).reshape(-1, horizon, n_u),
        costs=np.asarray(costs, dtype=float),
        converged=np.asarray(converged, dtype=bool),
        indices=np.asarray(indices, dtype=np.int64).reshape(-1, 3),
    )
    stats = dataset.statistics()
    logger.info("Generated %d records (converged fraction %.3f)",
                stats["records"], stats["converged_fraction"])
    return dataset
