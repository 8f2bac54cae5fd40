"""
Monte Carlo checks of the sampling guarantees.

The near-global optimality bound is checked on a toy problem whose solution
distribution is known in closed form: a one-input, eight-step sequence space with
two Gaussian modes, the lighter of which is the global optimum. Dataset coverage is
checked on a real benchmark by nearest-neighbor distances over growing datasets.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial import cKDTree
from scipy.stats import chi2

from ..datagen import Dataset, GenConfig, generate_dataset
from ..dynamics import FloatArray, SystemModel
from ..ocp import InputBox, OcpSpec, TransformKind
from ..solver import SolverConfig
from .metrics import SequenceSampler

logger = logging.getLogger(__name__)

TOY_HORIZON = 8


# =============================================================================
# Toy problem
# =============================================================================

@dataclass(frozen=True)
class ToyProblem:
    """
    Bimodal solution distribution over (H, 1) sequences.

    With probability `global_mass` a sample is drawn around the global optimum
    (+offset everywhere), otherwise around the local optimum (-offset). The cost
    gives the local optimum a fixed penalty.
    """
    global_mass: float = 0.3
    offset: float = 1.5
    std: float = 0.15
    penalty: float = 1.0
    horizon: int = TOY_HORIZON

    @property
    def optimum(self) -> FloatArray:
        return np.full((self.horizon, 1), self.offset)

    @property
    def local_optimum(self) -> FloatArray:
        return np.full((self.horizon, 1), -self.offset)

    def sample(self, count: int, rng: np.random.Generator) -> FloatArray:
        use_global = rng.random(count) < self.global_mass
        centers = np.where(use_global[:, None, None], self.optimum, self.local_optimum)
        return centers + self.std * rng.standard_normal((count, self.horizon, 1))

    def cost(self, u: np.ndarray) -> FloatArray:
        u = np.asarray(u, dtype=float).reshape(-1, self.horizon)
        to_global = np.sum((u - self.offset) ** 2, axis=1)
        to_local = np.sum((u + self.offset) ** 2, axis=1) + self.penalty
        return np.minimum(to_global, to_local)

    def distance_to_optimum(self, u: np.ndarray) -> FloatArray:
        u = np.asarray(u, dtype=float).reshape(-1, self.horizon)
        return np.linalg.norm(u - self.offset, axis=1)

    def ball_mass(self, epsilon: float) -> float:
        """
        Probability of the epsilon-ball around the optimum under the true distribution.

        The local mode is 2 * offset * sqrt(H) away and contributes nothing for the
        radii used here.
        """
        return float(self.global_mass * chi2.cdf((epsilon / self.std) ** 2, df=self.horizon))

    def ocp(self) -> OcpSpec:
        """Box used to normalize toy sequences for the denoiser."""
        bound = 2.0 * self.offset
        return OcpSpec(horizon=self.horizon, q=[0.0], r=[1.0], p=[0.0],
                       transform=TransformKind.IDENTITY,
                       box=InputBox(lower=[-bound], upper=[bound]))

    def dataset(self, records: int, rng: np.random.Generator) -> Dataset:
        """Records with a constant (zero) condition state."""
        sequences = self.sample(records, rng)
        return Dataset(
            header={"toy": {"global_mass": self.global_mass, "offset": self.offset, "std": self.std}},
            states=np.zeros((records, 1)),
            sequences=sequences,
            costs=self.cost(sequences),
            converged=np.ones(records, dtype=bool),
            indices=np.zeros((records, 3), dtype=np.int64),
        )


@dataclass
class TruthSampler:
    """Draws from the toy's true distribution (a perfect model)."""
    problem: ToyProblem

    def draw(self, state: np.ndarray, count: int, rng: np.random.Generator) -> FloatArray:
        return self.problem.sample(count, rng)


# =============================================================================
# Near-global optimality bound
# =============================================================================

class TheoremBoundParams(BaseModel):
    """Ball mass p_B, model error delta_tilde, sample count M and ball radius."""
    model_config = ConfigDict(frozen=True)

    p_b: float = Field(gt=0.0, le=1.0)
    delta_tilde: float = Field(ge=0.0)
    samples: int = Field(ge=1)
    epsilon: float = Field(gt=0.0)

    @property
    def precondition_holds(self) -> bool:
        return self.delta_tilde < self.p_b

    def bound(self) -> float:
        """(1 - p_B + delta_tilde) ** M"""
        return (1.0 - self.p_b + self.delta_tilde) ** self.samples


@dataclass
class BoundCheck:
    samples: int
    p_b: float
    delta_tilde: float
    bound: float
    failure_rate: float
    argmin_failure_rate: float
    standard_error: float
    trials: int
    status: str

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def theorem2_check(
    problem: ToyProblem,
    sampler: SequenceSampler,
    sample_counts: Sequence[int],
    trials: int,
    epsilon: float,
    rng: np.random.Generator,
    calibration_draws: int = 2000,
) -> List[BoundCheck]:
    """
    Compare the empirical miss rate of best-of-M sampling with the bound.

    A trial fails when none of its M samples lies within epsilon of the optimum; the
    argmin variant fails when the cheapest sample does not. delta_tilde is measured as
    the absolute error of the sampler's ball mass over `calibration_draws` samples.

    Returns:
        One BoundCheck per M with status "pass", "fail" or "inconclusive"
        (delta_tilde >= p_B)
    """
    state = np.zeros(1)
    calibration = sampler.draw(state, calibration_draws, rng)
    model_mass = float(np.mean(problem.distance_to_optimum(calibration) <= epsilon))
    p_b = problem.ball_mass(epsilon)
    delta_tilde = abs(model_mass - p_b)
    logger.info("Ball mass %.4f (true) vs %.4f (sampler)", p_b, model_mass)

    checks = []
    for m in sample_counts:
        params = TheoremBoundParams(p_b=p_b, delta_tilde=delta_tilde, samples=m, epsilon=epsilon)
        draws = sampler.draw(state, trials * m, rng).reshape(trials, m, -1)
        distances = problem.distance_to_optimum(draws.reshape(trials * m, -1)).reshape(trials, m)
        costs = problem.cost(draws.reshape(trials * m, -1)).reshape(trials, m)
        chosen = np.argmin(costs, axis=1)

        failure = float(np.mean(distances.min(axis=1) > epsilon))
        argmin_failure = float(np.mean(distances[np.arange(trials), chosen] > epsilon))
        bound = params.bound()
        se = float(np.sqrt(max(bound * (1.0 - bound), 0.0) / trials))
        if not params.precondition_holds:
            status = "inconclusive"
        else:
            status = "pass" if failure <= bound + 3.0 * se else "fail"
        checks.append(BoundCheck(m, p_b, delta_tilde, bound, failure, argmin_failure, se, trials, status))
    return checks


# =============================================================================
# Dataset coverage
# =============================================================================

@dataclass
class CoverageCurve:
    """
    Nearest-neighbor distances from a fixed probe set, one entry per dataset budget.

    `within_epsilon` holds when every probe lies closer than `epsilon` to some state
    of the largest dataset.
    """
    records: List[int]
    median_distance: List[float]
    max_distance: List[float]
    epsilon: float

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.median_distance) < 0))

    @property
    def within_epsilon(self) -> bool:
        return bool(self.max_distance[-1] < self.epsilon)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"records": self.records, "median_distance": self.median_distance,
                             "max_distance": self.max_distance})


def theorem1_coverage_check(
    datasets: Sequence[Dataset], probes: np.ndarray, epsilon: float
) -> CoverageCurve:
    """
    Distances from probe states to their nearest dataset state, per dataset.

    Args:
        datasets: Datasets of increasing budget
        probes: Probe states (P, n_x)
        epsilon: Coverage radius checked at the largest budget

    Raises:
        ValueError: With fewer than two datasets, an empty dataset or epsilon <= 0
    """
    if len(datasets) < 2:
        raise ValueError("Coverage needs at least two dataset budgets")
    if epsilon <= 0:
        raise ValueError(f"Coverage radius must be positive, got {epsilon}")
    probes = np.asarray(probes, dtype=float)
    curve = CoverageCurve([], [], [], epsilon)
    for ds in datasets:
        if len(ds) == 0:
            raise ValueError("Coverage dataset is empty")
        distances, _ = cKDTree(ds.states).query(probes)
        curve.records.append(len(ds))
        curve.median_distance.append(float(np.median(distances)))
        curve.max_distance.append(float(np.max(distances)))
    logger.info("Coverage medians %s, largest-budget max %.4g (epsilon %.4g)",
                [round(d, 6) for d in curve.median_distance], curve.max_distance[-1], epsilon)
    return curve


def coverage_datasets(
    model: SystemModel,
    spec: OcpSpec,
    gen: GenConfig,
    solver_cfg: SolverConfig,
    doublings: int,
) -> List[Dataset]:
    """
    Datasets with N_s doubled `doublings` times.

    Only the largest is generated; trajectory j draws from streams keyed by j alone,
    so each smaller dataset is the prefix holding trajectories below its N_s.
    """
    largest = generate_dataset(model, spec, gen.model_copy(update={"n_s": gen.n_s * 2**doublings}),
                               solver_cfg)
    datasets = []
    for i in range(doublings + 1):
        n_s = gen.n_s * 2**i
        subset = largest.take(largest.indices[:, 0] < n_s)
        subset.header["gen"] = {**largest.header["gen"], "n_s": n_s}
        datasets.append(subset)
    return datasets
