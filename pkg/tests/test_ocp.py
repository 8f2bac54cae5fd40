"""
Cost evaluation, nonlinear transforms and the adjoint gradient.
"""
import numpy as np
import pytest

from src.dynamics import SystemKind, SystemModel, equilibrium
from src.ocp import (
    InputBox,
    NonFiniteCost,
    OcpSpec,
    TransformKind,
    cost_and_gradient,
    evaluate_costs,
    nonlinear_transform,
    total_cost,
    transform_derivative,
    upright_error,
    wrap_angle,
)


# =============================================================================
# Transforms
# =============================================================================

def test_cart_pole_transform_vanishes_upright():
    x = np.array([0.0, 0.0, np.pi, 0.0])
    assert nonlinear_transform(TransformKind.CART_POLE, x)[2] == 0.0
    hanging = nonlinear_transform(TransformKind.CART_POLE, np.zeros(4))
    assert hanging[2] == pytest.approx(-np.pi)


def test_pendubot_transform_vanishes_upright():
    model = SystemModel(kind=SystemKind.PENDUBOT)
    z = nonlinear_transform(TransformKind.PENDUBOT, equilibrium(model, upright=True))
    np.testing.assert_allclose(z, 0.0, atol=1e-15)


def test_double_cart_pole_transform_vanishes_upright():
    model = SystemModel(kind=SystemKind.DOUBLE_CART_POLE)
    z = nonlinear_transform(TransformKind.DOUBLE_CART_POLE, equilibrium(model, upright=True))
    np.testing.assert_array_equal(z, np.zeros(6))


@pytest.mark.parametrize("kind", list(TransformKind))
def test_transform_derivative_matches_differences(kind):
    n_x = 6 if kind is TransformKind.DOUBLE_CART_POLE else 4
    x = np.random.default_rng(2).normal(size=n_x)
    h = 1e-7
    for d in range(n_x):
        e = np.zeros(n_x)
        e[d] = h
        fd = (nonlinear_transform(kind, x + e) - nonlinear_transform(kind, x - e))[d] / (2 * h)
        assert transform_derivative(kind, x)[d] == pytest.approx(fd, abs=1e-6)


def test_upright_error_wraps_angles():
    assert float(wrap_angle(np.array(2.5 * np.pi))) == pytest.approx(0.5 * np.pi)
    x = np.array([0.0, 0.0, np.pi + 2 * np.pi, 0.0])
    assert upright_error(SystemKind.CART_POLE, x) == pytest.approx(0.0, abs=1e-12)
    assert upright_error(SystemKind.CART_POLE, np.zeros(4)) == pytest.approx(np.pi)


# =============================================================================
# Costs
# =============================================================================

def test_single_step_cost_by_hand(linear_model):
    """H = 1 on x_dot = u: x1 = x0 + dt * u exactly under RK4."""
    spec = OcpSpec(horizon=1, q=[2.0], r=[0.5], p=[3.0], transform=TransformKind.IDENTITY,
                   box=InputBox(lower=[-10.0], upper=[10.0]))
    x0, u = 1.5, 4.0
    x1 = x0 + linear_model.dt * u
    expected = 2.0 * x0**2 + 0.5 * u**2 + 3.0 * x1**2
    assert total_cost(spec, linear_model, np.array([x0]), np.array([[u]])) == pytest.approx(expected, rel=1e-12)


def test_zero_weights_give_zero_cost(linear_model):
    spec = OcpSpec(horizon=3, q=[0.0], r=[1e-300], p=[0.0], transform=TransformKind.IDENTITY,
                   box=InputBox(lower=[-1.0], upper=[1.0]))
    assert total_cost(spec, linear_model, np.array([5.0]), np.zeros((3, 1))) == 0.0


def test_cost_is_positively_homogeneous_in_weights(cart_pole, cart_pole_spec):
    x0 = np.array([0.2, 0.0, 0.5, 0.0])
    u = np.linspace(-3, 3, 5)[:, None]
    base = total_cost(cart_pole_spec, cart_pole, x0, u)
    assert total_cost(cart_pole_spec.scaled(4.0), cart_pole, x0, u) == pytest.approx(4.0 * base)


def test_horizon_mismatch_is_rejected(linear_model, linear_spec):
    with pytest.raises(ValueError):
        total_cost(linear_spec, linear_model, np.zeros(1), np.zeros((3, 1)))


def test_diverging_rollout_raises(linear_model, linear_spec):
    u = np.full((linear_spec.horizon, 1), 1e308)
    with pytest.raises(NonFiniteCost):
        total_cost(linear_spec, linear_model, np.zeros(1), u)


def test_batch_scores_diverged_rows_as_infinite(linear_model, linear_spec):
    batch = np.zeros((3, linear_spec.horizon, 1))
    batch[1] = 1e308
    costs = evaluate_costs(linear_spec, linear_model, np.array([1.0]), batch)
    assert np.isinf(costs[1])
    assert costs[0] == pytest.approx(total_cost(linear_spec, linear_model, np.array([1.0]), batch[0]))
    assert costs[0] == costs[2]


def test_invalid_weights_rejected():
    box = InputBox(lower=[-1.0], upper=[1.0])
    with pytest.raises(ValueError):
        OcpSpec(horizon=2, q=[1.0], r=[0.0], p=[1.0], transform=TransformKind.IDENTITY, box=box)
    with pytest.raises(ValueError):
        OcpSpec(horizon=2, q=[-1.0], r=[1.0], p=[1.0], transform=TransformKind.IDENTITY, box=box)
    with pytest.raises(ValueError):
        InputBox(lower=[1.0], upper=[1.0])


# =============================================================================
# Gradient
# =============================================================================

class TestAdjointGradient:
    """The adjoint gradient agrees with the cost it differentiates."""

    def test_cost_matches_total_cost(self, cart_pole, cart_pole_spec):
        x0 = np.array([0.0, 0.1, 0.3, -0.2])
        u = np.array([[1.0], [-2.0], [0.5], [3.0], [0.0]])
        cost, _ = cost_and_gradient(cart_pole_spec, cart_pole, x0, u)
        assert cost == pytest.approx(total_cost(cart_pole_spec, cart_pole, x0, u), rel=1e-14)

    @pytest.mark.parametrize("kind, transform, q", [
        (SystemKind.CART_POLE, TransformKind.CART_POLE, [1.0, 0.1, 5.0, 0.1]),
        (SystemKind.PENDUBOT, TransformKind.PENDUBOT, [5.0, 5.0, 0.1, 0.1]),
        (SystemKind.DOUBLE_CART_POLE, TransformKind.DOUBLE_CART_POLE, [1.0, 0.1, 5.0, 0.1, 5.0, 0.1]),
    ])
    def test_gradient_matches_central_differences(self, kind, transform, q):
        model = SystemModel(kind=kind)
        spec = OcpSpec(horizon=6, q=q, r=[0.01], p=[2.0 * w for w in q], transform=transform,
                       box=InputBox(lower=[-50.0], upper=[50.0]))
        rng = np.random.default_rng(11)
        x0 = rng.normal(scale=0.3, size=model.n_x)
        u = rng.uniform(-2.0, 2.0, size=(6, 1))
        _, grad = cost_and_gradient(spec, model, x0, u)
        h = 1e-6
        for i in range(6):
            plus, minus = u.copy(), u.copy()
            plus[i, 0] += h
            minus[i, 0] -= h
            fd = (total_cost(spec, model, x0, plus) - total_cost(spec, model, x0, minus)) / (2 * h)
            assert grad[i, 0] == pytest.approx(fd, rel=1e-5, abs=1e-6)

    @pytest.mark.parametrize("kind, transform", [
        (SystemKind.CART_POLE, TransformKind.CART_POLE),
        (SystemKind.PENDUBOT, TransformKind.PENDUBOT),
        (SystemKind.DOUBLE_CART_POLE, TransformKind.DOUBLE_CART_POLE),
        (SystemKind.LINEAR, TransformKind.IDENTITY),
    ])
    def test_gradient_over_random_instances(self, kind, transform):
        """100 random states, weights and sequences per plant."""
        model = SystemModel(kind=kind)
        rng = np.random.default_rng([17, list(SystemKind).index(kind)])
        horizon, h = 6, 1e-5
        worst = 0.0
        for _ in range(100):
            q = rng.uniform(0.1, 5.0, size=model.n_x)
            spec = OcpSpec(horizon=horizon, q=q.tolist(), r=[float(rng.uniform(0.01, 1.0))],
                           p=(2.0 * q).tolist(), transform=transform,
                           box=InputBox(lower=[-50.0], upper=[50.0]))
            x0 = rng.normal(scale=0.5, size=model.n_x)
            u = rng.uniform(-3.0, 3.0, size=(horizon, 1))
            _, grad = cost_and_gradient(spec, model, x0, u)
            fd = np.zeros(horizon)
            for i in range(horizon):
                plus, minus = u.copy(), u.copy()
                plus[i, 0] += h
                minus[i, 0] -= h
                fd[i] = (total_cost(spec, model, x0, plus) - total_cost(spec, model, x0, minus)) / (2 * h)
            error = np.linalg.norm(grad[:, 0] - fd) / max(np.linalg.norm(fd), 1.0)
            worst = max(worst, error)
        assert worst < 1e-6

    def test_linear_gradient_closed_form(self, linear_model):
        """H = 1: dJ/du = 2 r u + 2 p x1 dt."""
        spec = OcpSpec(horizon=1, q=[1.0], r=[0.5], p=[3.0], transform=TransformKind.IDENTITY,
                       box=InputBox(lower=[-10.0], upper=[10.0]))
        x0, u = 2.0, -1.0
        x1 = x0 + linear_model.dt * u
        _, grad = cost_and_gradient(spec, linear_model, np.array([x0]), np.array([[u]]))
        assert grad[0, 0] == pytest.approx(2 * 0.5 * u + 2 * 3.0 * x1 * linear_model.dt, rel=1e-12)
