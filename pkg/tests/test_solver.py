"""
Local and multi-start solvers.
"""
import numpy as np
import pytest

from src.dynamics import SystemKind, SystemModel
from src.evalcli.metrics import has_separated_pair
from src.ocp import InputBox, OcpSpec, TransformKind, total_cost
from src.solver import (
    AllSolvesDiverged,
    SolverConfig,
    project_box,
    projected_gradient_norm,
    shift_warm_start,
    solve_local,
    solve_multistart,
)


def _lq_optimum(spec: OcpSpec, dt: float, x0: float) -> float:
    """Unconstrained optimum of the integrator LQ problem by least squares."""
    horizon = spec.horizon
    # x_i = x0 + dt * sum_{j<i} u_j for i = 0..H
    lower = np.tril(np.ones((horizon + 1, horizon)), k=-1)
    weights = np.sqrt(np.array([spec.q[0]] * horizon + [spec.p[0]]))
    a = np.vstack([weights[:, None] * dt * lower, np.sqrt(spec.r[0]) * np.eye(horizon)])
    b = np.concatenate([-weights * x0, np.zeros(horizon)])
    u, *_ = np.linalg.lstsq(a, b, rcond=None)
    return float(np.sum((a @ u - b) ** 2))


# =============================================================================
# Helpers
# =============================================================================

def test_project_box_clamps():
    box = InputBox(lower=[-1.0], upper=[2.0])
    u = np.array([[-3.0], [0.5], [5.0]])
    np.testing.assert_array_equal(project_box(u, box), [[-1.0], [0.5], [2.0]])


def test_projected_gradient_vanishes_at_active_bound():
    """A gradient pushing against an active bound is stationary."""
    box = InputBox(lower=[-1.0], upper=[1.0])
    u = np.array([[1.0], [-1.0]])
    grad = np.array([[-5.0], [5.0]])
    assert projected_gradient_norm(u, grad, box) == 0.0


def test_shift_warm_start_repeats_last():
    u = np.array([[1.0], [2.0], [3.0]])
    np.testing.assert_array_equal(shift_warm_start(u), [[2.0], [3.0], [3.0]])


# =============================================================================
# Local solves
# =============================================================================

class TestSolveLocal:

    def test_converges_to_lq_optimum(self, linear_model, linear_spec, fast_solver):
        x0 = np.array([1.0])
        result = solve_local(linear_spec, linear_model, x0, np.zeros((16, 1)), fast_solver)
        assert result.converged
        assert result.cost == pytest.approx(_lq_optimum(linear_spec, linear_model.dt, 1.0), rel=1e-6)

    def test_cost_trace_never_increases(self, cart_pole, cart_pole_spec, fast_solver):
        x0 = np.array([0.0, 0.0, 0.3, 0.0])
        guess = np.random.default_rng(0).uniform(-20, 20, size=(5, 1))
        result = solve_local(cart_pole_spec, cart_pole, x0, guess, fast_solver)
        assert np.all(np.diff(result.cost_trace) <= 1e-12)
        assert result.cost <= total_cost(cart_pole_spec, cart_pole, x0, guess)

    def test_solution_respects_box(self, linear_model):
        spec = OcpSpec(horizon=8, q=[1.0], r=[0.01], p=[100.0], transform=TransformKind.IDENTITY,
                       box=InputBox(lower=[-0.5], upper=[0.5]))
        result = solve_local(spec, linear_model, np.array([3.0]), np.zeros((8, 1)),
                             SolverConfig(stationarity_tol=1e-8))
        assert np.all(result.sequence >= -0.5) and np.all(result.sequence <= 0.5)
        # Pushing x toward zero saturates every input at the lower bound
        np.testing.assert_allclose(result.sequence, -0.5)
        assert result.converged

    def test_iteration_cap_reports_not_converged(self, cart_pole, cart_pole_spec):
        guess = np.full((5, 1), 30.0)
        result = solve_local(cart_pole_spec, cart_pole, np.array([0.0, 0.0, 0.3, 0.0]), guess,
                             SolverConfig(max_iterations=1, stationarity_tol=1e-12))
        assert not result.converged
        assert result.iterations == 1

    def test_diverging_guess_returns_infinite_cost(self, linear_model, linear_spec, fast_solver):
        spec = linear_spec.model_copy(update={"box": InputBox(lower=[-1e308], upper=[1e308])})
        result = solve_local(spec, linear_model, np.zeros(1), np.full((16, 1), 1e308), fast_solver)
        assert result.cost == float("inf")
        assert not result.converged


# =============================================================================
# Multi-start
# =============================================================================

class TestSolveMultistart:

    def test_best_is_minimum_over_starts(self, cart_pole, cart_pole_spec, fast_solver):
        rng = np.random.default_rng(5)
        guesses = [rng.uniform(-30, 30, size=(5, 1)) for _ in range(4)]
        x0 = np.array([0.0, 0.0, 0.5, 0.0])
        outcome = solve_multistart(cart_pole_spec, cart_pole, x0, guesses, fast_solver)
        assert len(outcome.results) == 4
        assert outcome.best.cost == min(r.cost for r in outcome.results)
        assert outcome.results[outcome.best_index] is outcome.best

    def test_threaded_results_match_sequential(self, cart_pole, cart_pole_spec, fast_solver):
        rng = np.random.default_rng(6)
        guesses = [rng.uniform(-30, 30, size=(5, 1)) for _ in range(3)]
        x0 = np.array([0.0, 0.0, 0.5, 0.0])
        sequential = solve_multistart(cart_pole_spec, cart_pole, x0, guesses, fast_solver)
        threaded = solve_multistart(cart_pole_spec, cart_pole, x0, guesses,
                                    fast_solver.model_copy(update={"workers": 3}))
        assert [r.cost for r in sequential.results] == [r.cost for r in threaded.results]
        assert sequential.best_index == threaded.best_index

    def test_empty_guess_list_rejected(self, linear_model, linear_spec, fast_solver):
        with pytest.raises(ValueError):
            solve_multistart(linear_spec, linear_model, np.zeros(1), [], fast_solver)

    def test_all_diverged(self, linear_model, linear_spec, fast_solver):
        spec = linear_spec.model_copy(update={"box": InputBox(lower=[-1e308], upper=[1e308])})
        with pytest.raises(AllSolvesDiverged):
            solve_multistart(spec, linear_model, np.zeros(1), [np.full((16, 1), 1e308)] * 2,
                             fast_solver)


# =============================================================================
# Multiple local minima
# =============================================================================

class TestLocalMinima:

    def test_pendubot_mirror_minima_from_rest(self):
        """Opposite constant guesses from the hanging rest state end in mirrored solutions."""
        model = SystemModel(kind=SystemKind.PENDUBOT)
        spec = OcpSpec(horizon=40, q=[100.0, 100.0, 1.0, 1.0], r=[1.0], p=[1000.0, 1000.0, 10.0, 10.0],
                       transform=TransformKind.PENDUBOT, box=InputBox(lower=[-5.0], upper=[5.0]))
        x0 = np.zeros(4)
        cfg = SolverConfig(max_iterations=300)
        guesses = [np.full((40, 1), 2.0), np.full((40, 1), -2.0)]
        outcome = solve_multistart(spec, model, x0, guesses, cfg)
        plus, minus = outcome.results

        assert plus.cost == pytest.approx(minus.cost, rel=1e-6)
        np.testing.assert_allclose(plus.sequence, -minus.sequence, atol=1e-5)
        assert np.linalg.norm(plus.sequence - minus.sequence) > 1.0
        assert outcome.best.cost <= min(plus.cost, minus.cost)

    @pytest.mark.slow
    def test_cart_pole_swing_up_has_two_solution_clusters(self):
        """Twenty random guesses from downward rest reach at least two separated local optima."""
        model = SystemModel(kind=SystemKind.CART_POLE)
        spec = OcpSpec(horizon=64, q=[0.01, 0.01, 1000.0, 0.01], r=[0.001],
                       p=[0.01, 0.1, 1000.0, 0.1], transform=TransformKind.CART_POLE,
                       box=InputBox(lower=[-100.0], upper=[100.0]))
        rng = np.random.default_rng(20)
        guesses = [np.full((64, 1), 100.0), np.full((64, 1), -100.0)]
        guesses += [rng.uniform(-100.0, 100.0, size=(64, 1)) for _ in range(18)]
        outcome = solve_multistart(spec, model, np.zeros(4), guesses, SolverConfig())
        finite = [r.sequence for r in outcome.results if np.isfinite(r.cost)]

        threshold = 0.1 * spec.box.width[0] * np.sqrt(spec.horizon)
        assert has_separated_pair(np.array(finite), threshold)
