"""
Local OCP Solver

Box-constrained minimization of J(x0, .) from a supplied initial guess: projected
limited-memory quasi-Newton steps on the free variables, falling back to projected
steepest descent, both globalized by Armijo backtracking along the projection arc.
"""
import logging
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Deque, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..dynamics import FloatArray, SystemModel
from ..ocp import InputBox, NonFiniteCost, OcpSpec, cost_and_gradient

logger = logging.getLogger(__name__)


class SolveDiverged(RuntimeError):
    """Raised when an online solve ends without a finite cost."""
    pass


class AllSolvesDiverged(SolveDiverged):
    """Raised when every start of a multi-start solve ends with a non-finite cost."""
    pass


class SolverConfig(BaseModel):
    """Termination and line-search settings of the local solver."""
    model_config = ConfigDict(frozen=True)

    max_iterations: int = Field(default=500, ge=1)
    stationarity_tol: float = Field(default=1e-4, gt=0.0)
    initial_step: float = Field(default=1.0, gt=0.0)
    armijo: float = Field(default=1e-4, gt=0.0, lt=1.0)
    backtracking: float = Field(default=0.5, gt=0.0, lt=1.0)
    max_backtracks: int = Field(default=40, ge=1)
    memory: int = Field(default=10, ge=0)
    workers: int = Field(default=1, ge=1)


@dataclass
class SolveResult:
    """Outcome of one local solve. `cost_trace` holds the cost of every accepted iterate."""
    sequence: FloatArray
    cost: float
    iterations: int
    converged: bool
    projected_gradient_norm: float
    wall_time: float
    cost_trace: List[float] = field(default_factory=list)


@dataclass
class MultistartResult:
    best: SolveResult
    best_index: int
    results: List[SolveResult]


def project_box(u: np.ndarray, box: InputBox) -> FloatArray:
    """Clamp every input of a sequence (..., n_u) into the box."""
    return np.clip(np.asarray(u, dtype=float), box.lower_array, box.upper_array)


def projected_gradient_norm(u: np.ndarray, grad: np.ndarray, box: InputBox) -> float:
    """Stationarity measure ||u - P(u - g)||_inf."""
    return float(np.max(np.abs(u - project_box(u - grad, box))))


def shift_warm_start(u: np.ndarray) -> FloatArray:
    """Receding-horizon shift: drop the first input and repeat the last one."""
    u = np.asarray(u, dtype=float)
    return np.concatenate([u[1:], u[-1:]], axis=0)


def _free_mask(u: np.ndarray, grad: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    at_lower = (u <= lower) & (grad > 0.0)
    at_upper = (u >= upper) & (grad < 0.0)
    return ~(at_lower | at_upper)


def _quasi_newton_direction(
    grad: np.ndarray, free: np.ndarray, pairs: Deque[Tuple[np.ndarray, np.ndarray]]
) -> Optional[np.ndarray]:
    """L-BFGS two-loop recursion restricted to the free variables (flattened)."""
    if not pairs:
        return None
    q = np.where(free, grad, 0.0)
    history = []
    for s, y in reversed(pairs):
        s_f, y_f = np.where(free, s, 0.0), np.where(free, y, 0.0)
        sy = float(s_f @ y_f)
        if sy <= 0.0:
            continue
        rho = 1.0 / sy
        alpha = rho * float(s_f @ q)
        q = q - alpha * y_f
        history.append((s_f, y_f, rho, alpha))
    if not history:
        return None
    s_last, y_last = history[0][0], history[0][1]
    gamma = float(s_last @ y_last) / float(y_last @ y_last)
    r = gamma * q
    for s_f, y_f, rho, alpha in reversed(history):
        beta = rho * float(y_f @ r)
        r = r + (alpha - beta) * s_f
    return -np.where(free, r, 0.0)


def solve_local(
    spec: OcpSpec,
    model: SystemModel,
    x0: np.ndarray,
    guess: np.ndarray,
    cfg: SolverConfig,
) -> SolveResult:
    """
    Locally minimize J(x0, .) over the input box starting from a guess.

    Accepted iterates never increase the cost. A guess whose rollout diverges returns
    immediately with cost +inf and converged=False.

    Args:
        spec: OCP definition
        model: Plant
        x0: Current state (n_x,)
        guess: Initial control sequence (H, n_u)
        cfg: Solver settings

    Returns:
        SolveResult with a sequence that satisfies the box exactly
    """
    started = time.perf_counter()
    box = spec.box
    shape = np.shape(guess)
    lower = np.broadcast_to(box.lower_array, shape).ravel()
    upper = np.broadcast_to(box.upper_array, shape).ravel()

    u = project_box(guess, box)
    try:
        cost, grad = cost_and_gradient(spec, model, x0, u)
    except NonFiniteCost:
        logger.warning("Initial guess diverges from state %s", np.asarray(x0).tolist())
        return SolveResult(u, float("inf"), 0, False, float("inf"),
                           time.perf_counter() - started, [])

    pairs: Deque[Tuple[np.ndarray, np.ndarray]] = deque(maxlen=cfg.memory or None)
    trace = [cost]
    converged = False
    iterations = 0
    pg_norm = projected_gradient_norm(u, grad, box)

    while True:
        if pg_norm <= cfg.stationarity_tol:
            converged = True
            break
        if iterations >= cfg.max_iterations:
            break
        iterations += 1

        u_flat, g_flat = u.ravel(), grad.ravel()
        free = _free_mask(u_flat, g_flat, lower, upper)
        candidates = []
        if cfg.memory > 0:
            qn = _quasi_newton_direction(g_flat, free, pairs)
            if qn is not None and float(qn @ g_flat) < 0.0:
                candidates.append((qn, 1.0))
        g_scale = max(1.0, float(np.max(np.abs(g_flat))))
        candidates.append((-g_flat, cfg.initial_step / g_scale))

        accepted = None
        for direction, step in candidates:
            accepted = _armijo_search(spec, model, x0, u_flat, cost, g_flat, direction,
                                      step, lower, upper, cfg)
            if accepted is not None:
                break
        if accepted is None:
            logger.debug("Line search failed at iteration %d (cost %.6g)", iterations, cost)
            break

        u_new, cost_new, grad_new = accepted
        s = u_new.ravel() - u_flat
        y = grad_new.ravel() - g_flat
        if cfg.memory > 0 and float(s @ y) > 1e-12 * float(s @ s):
            pairs.append((s, y))
        u, cost, grad = u_new.reshape(shape), cost_new, grad_new
        trace.append(cost)
        pg_norm = projected_gradient_norm(u, grad, box)

    if not converged:
        logger.warning(
            "Local solve stopped after %d iterations, projected gradient %.3g > %.3g",
            iterations, pg_norm, cfg.stationarity_tol,
        )
    else:
        logger.debug("Local solve converged in %d iterations, cost %.6g", iterations, cost)

    return SolveResult(
        sequence=u,
        cost=cost,
        iterations=iterations,
        converged=converged,
        projected_gradient_norm=pg_norm,
        wall_time=time.perf_counter() - started,
        cost_trace=trace,
    )


def _armijo_search(
    spec: OcpSpec,
    model: SystemModel,
    x0: np.ndarray,
    u_flat: np.ndarray,
    cost: float,
    g_flat: np.ndarray,
    direction: np.ndarray,
    step: float,
    lower: np.ndarray,
    upper: np.ndarray,
    cfg: SolverConfig,
) -> Optional[Tuple[np.ndarray, float, np.ndarray]]:
    """Backtrack along the projection arc P(u + a d) until sufficient decrease holds."""
    shape = (spec.horizon, spec.n_u)
    for _ in range(cfg.max_backtracks):
        trial = np.clip(u_flat + step * direction, lower, upper)
        decrease = float(g_flat @ (trial - u_flat))
        if decrease >= 0.0:
            step *= cfg.backtracking
            continue
        try:
            trial_cost, trial_grad = cost_and_gradient(spec, model, x0, trial.reshape(shape))
        except NonFiniteCost:
            step *= cfg.backtracking
            continue
        if trial_cost <= cost + cfg.armijo * decrease:
            return trial.reshape(shape), trial_cost, trial_grad
        step *= cfg.backtracking
    return None


def solve_multistart(
    spec: OcpSpec,
    model: SystemModel,
    x0: np.ndarray,
    guesses: Sequence[np.ndarray],
    cfg: SolverConfig,
) -> MultistartResult:
    """
    Run solve_local from every guess and keep the cheapest result.

    Starts run on `cfg.workers` threads; results keep the order of the guesses and
    ties go to the lowest index.

    Raises:
        ValueError: If no guess is supplied
        AllSolvesDiverged: If every start ends with a non-finite cost
    """
    if len(guesses) == 0:
        raise ValueError("solve_multistart needs at least one guess")

    def run(guess: np.ndarray) -> SolveResult:
        return solve_local(spec, model, x0, guess, cfg)

    if cfg.workers > 1 and len(guesses) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run, guesses))
    else:
        results = [run(guess) for guess in guesses]

    costs = np.array([result.cost for result in results])
    if not np.any(np.isfinite(costs)):
        raise AllSolvesDiverged(f"All {len(guesses)} starts diverged from state {np.asarray(x0).tolist()}")
    best_index = int(np.argmin(costs))
    return MultistartResult(best=results[best_index], best_index=best_index, results=results)
