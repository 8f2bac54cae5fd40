"""
Dense network engine: gradients, Adam and checkpoints.
"""
import numpy as np
import pytest

from src.neural import (
    Activation,
    CheckpointMismatch,
    MlpSpec,
    NonFiniteGradient,
    ShapeMismatch,
    adam_step,
    backward,
    forward,
    init_adam,
    init_parameters,
    load_checkpoint,
    save_checkpoint,
)
from src.utils.integrity import IntegrityError


@pytest.fixture
def small_net(rng):
    spec = MlpSpec.uniform(3, [5, 4], 2, Activation.TANH)
    return spec, init_parameters(spec, rng)


def test_layout_validation():
    with pytest.raises(ValueError):
        MlpSpec(widths=[3, 2], activations=[])
    with pytest.raises(ValueError):
        MlpSpec(widths=[3, 4, 2], activations=[Activation.TANH, Activation.TANH])


def test_forward_shapes(small_net):
    spec, params = small_net
    assert forward(spec, params, np.zeros(3)).shape == (2,)
    assert forward(spec, params, np.zeros((7, 3))).shape == (7, 2)
    with pytest.raises(ShapeMismatch):
        forward(spec, params, np.zeros((7, 4)))


@pytest.mark.parametrize("activation", [Activation.TANH, Activation.SILU])
def test_backward_matches_finite_differences(activation, rng):
    spec = MlpSpec.uniform(3, [6, 5], 2, activation)
    params = init_parameters(spec, rng)
    x = rng.normal(size=(4, 3))
    weights = rng.normal(size=(4, 2))

    def loss(p):
        return float(np.sum(weights * forward(spec, p, x)))

    grads, grad_x = backward(spec, params, x, weights)
    h = 1e-6
    for layer in range(len(params.weights)):
        for idx in [(0, 0), (1, 1), (2, 0)]:
            if idx[0] >= params.weights[layer].shape[0] or idx[1] >= params.weights[layer].shape[1]:
                continue
            plus, minus = params.copy(), params.copy()
            plus.weights[layer][idx] += h
            minus.weights[layer][idx] -= h
            fd = (loss(plus) - loss(minus)) / (2 * h)
            assert grads.weights[layer][idx] == pytest.approx(fd, rel=1e-5, abs=1e-7)
        plus, minus = params.copy(), params.copy()
        plus.biases[layer][0] += h
        minus.biases[layer][0] -= h
        assert grads.biases[layer][0] == pytest.approx((loss(plus) - loss(minus)) / (2 * h),
                                                       rel=1e-5, abs=1e-7)

    x_plus, x_minus = x.copy(), x.copy()
    x_plus[1, 2] += h
    x_minus[1, 2] -= h
    fd_x = (np.sum(weights * forward(spec, params, x_plus))
            - np.sum(weights * forward(spec, params, x_minus))) / (2 * h)
    assert grad_x[1, 2] == pytest.approx(fd_x, rel=1e-5, abs=1e-7)


def test_adam_first_step_moves_by_learning_rate():
    """With bias correction the first update is lr * sign(g)."""
    params = [np.array([1.0, -2.0])]
    state = init_adam(params, learning_rate=0.1)
    new, state = adam_step(state, params, [np.array([3.0, -0.5])])
    np.testing.assert_allclose(new[0], [0.9, -1.9], rtol=1e-6)
    assert state.step == 1


def test_adam_minimizes_quadratic():
    params = [np.array([5.0])]
    state = init_adam(params, learning_rate=0.1)
    for _ in range(500):
        params, state = adam_step(state, params, [2.0 * params[0]])
    assert abs(params[0][0]) < 0.5


def test_adam_rejects_non_finite():
    params = [np.zeros(2)]
    with pytest.raises(NonFiniteGradient):
        adam_step(init_adam(params), params, [np.array([np.nan, 0.0])])


class TestCheckpoint:

    def test_round_trip(self, small_net, tmp_path):
        spec, params = small_net
        path = tmp_path / "net.dnnn"
        save_checkpoint(path, spec, params, {"note": "x"}, {"token": np.arange(3.0)})
        loaded = load_checkpoint(path, expected=spec)
        for a, b in zip(loaded.params.arrays(), params.arrays()):
            np.testing.assert_array_equal(a, b)
        assert loaded.meta == {"note": "x"}
        np.testing.assert_array_equal(loaded.extras["token"], np.arange(3.0))

    def test_layout_mismatch(self, small_net, tmp_path):
        spec, params = small_net
        path = tmp_path / "net.dnnn"
        save_checkpoint(path, spec, params)
        other = MlpSpec.uniform(3, [5, 5], 2, Activation.TANH)
        with pytest.raises(CheckpointMismatch):
            load_checkpoint(path, expected=other)

    def test_corruption_detected(self, small_net, tmp_path):
        spec, params = small_net
        path = tmp_path / "net.dnnn"
        save_checkpoint(path, spec, params)
        blob = bytearray(path.read_bytes())
        blob[-33] ^= 0x01
        path.write_bytes(bytes(blob))
        with pytest.raises(IntegrityError):
            load_checkpoint(path)
