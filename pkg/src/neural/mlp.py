"""
Dense network engine.

Fully connected layers with a choice of hidden activation and identity output,
an explicit batch axis, and exact reverse-mode gradients. Weights are stored as
(fan_in, fan_out) so a layer is h @ W + b.
"""
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from ..utils.integrity import digest_payload


class ShapeMismatch(ValueError):
    """Raised when inputs, gradients or parameters do not match the network layout."""
    pass


class Activation(str, Enum):
    TANH = "tanh"
    SILU = "silu"
    RELU = "relu"
    IDENTITY = "identity"


class MlpSpec(BaseModel):
    """
    Network layout.

    `widths` lists the input width, every hidden width and the output width;
    `activations` has one entry per hidden layer.
    """
    model_config = ConfigDict(frozen=True)

    widths: List[int]
    activations: List[Activation]

    @model_validator(mode="after")
    def _check_layout(self) -> "MlpSpec":
        if len(self.widths) < 3:
            raise ValueError("An MLP needs an input, at least one hidden and an output width")
        if any(w < 1 for w in self.widths):
            raise ValueError(f"Widths must be >= 1, got {self.widths}")
        if len(self.activations) != len(self.widths) - 2:
            raise ValueError(
                f"{len(self.widths) - 2} hidden layers need as many activations, "
                f"got {len(self.activations)}"
            )
        return self

    @classmethod
    def uniform(cls, n_in: int, hidden: Sequence[int], n_out: int, activation: Activation) -> "MlpSpec":
        return cls(widths=[n_in, *hidden, n_out], activations=[activation] * len(hidden))

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    def digest(self) -> str:
        return digest_payload(self.model_dump(mode="json"))


@dataclass
class Parameters:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def arrays(self) -> List[np.ndarray]:
        """Flat [W1, b1, W2, b2, ...] view used by the optimizer and checkpoints."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "Parameters":
        return cls(weights=list(arrays[0::2]), biases=list(arrays[1::2]))

    def copy(self) -> "Parameters":
        return Parameters([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class ForwardCache:
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]


def init_parameters(spec: MlpSpec, rng: np.random.Generator) -> Parameters:
    """Uniform fan-in initialization, U(-sqrt(1/fan_in), sqrt(1/fan_in)), for weights and biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        bound = np.sqrt(1.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return Parameters(weights, biases)


def check_parameters(spec: MlpSpec, params: Parameters) -> None:
    if len(params.weights) != len(spec.widths) - 1 or len(params.biases) != len(params.weights):
        raise ShapeMismatch("Parameter count does not match the layer count")
    for layer, (fan_in, fan_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
        if params.weights[layer].shape != (fan_in, fan_out) or params.biases[layer].shape != (fan_out,):
            raise ShapeMismatch(f"Layer {layer} parameters do not match ({fan_in}, {fan_out})")


# =============================================================================
# Activations
# =============================================================================

def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def activate(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.TANH:
        return np.tanh(z)
    if kind is Activation.SILU:
        return z * _sigmoid(z)
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    return z


def activation_derivative(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.TANH:
        return 1.0 - np.tanh(z) ** 2
    if kind is Activation.SILU:
        s = _sigmoid(z)
        return s * (1.0 + z * (1.0 - s))
    if kind is Activation.RELU:
        return (z > 0.0).astype(z.dtype)
    return np.ones_like(z)


# =============================================================================
# Forward / backward
# =============================================================================

def forward_with_cache(
    spec: MlpSpec, params: Parameters, x: np.ndarray
) -> Tuple[np.ndarray, ForwardCache]:
    """Forward pass keeping the layer inputs and pre-activations for backward."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.n_in:
        raise ShapeMismatch(f"Input width {x.shape[-1]} does not match {spec.n_in}")
    inputs, pre = [], []
    h = x
    last = len(params.weights) - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = z if layer == last else activate(spec.activations[layer], z)
    return h, ForwardCache(inputs, pre)


def forward(spec: MlpSpec, params: Parameters, x: np.ndarray) -> np.ndarray:
    """
    Evaluate the network.

    Args:
        spec: Layout
        params: Weights and biases
        x: Inputs, shape (n_in,) or (batch, n_in)

    Returns:
        Outputs with the same leading shape and width n_out

    Raises:
        ShapeMismatch: On a wrong input width
    """
    return forward_with_cache(spec, params, x)[0]


def backward(
    spec: MlpSpec,
    params: Parameters,
    x: Optional[np.ndarray],
    grad_out: np.ndarray,
    cache: Optional[ForwardCache] = None,
) -> Tuple[Parameters, np.ndarray]:
    """
    Reverse-mode gradients of sum(grad_out * forward(x)).

    Gradients are summed over the batch; callers using a mean loss scale grad_out.

    Args:
        spec: Layout
        params: Weights and biases
        x: Inputs (batch, n_in)
        grad_out: dL/d output, same shape as the output
        cache: Intermediates from forward_with_cache on the same x (recomputed if None)

    Returns:
        A tuple (parameter gradients, dL/dx)
    """
    if cache is None:
        if x is None:
            raise ShapeMismatch("backward needs either the inputs or a forward cache")
        _, cache = forward_with_cache(spec, params, x)
    grad_out = np.asarray(grad_out, dtype=float)
    if grad_out.shape != cache.pre_activations[-1].shape:
        raise ShapeMismatch(
            f"Output gradient shape {grad_out.shape} does not match {cache.pre_activations[-1].shape}"
        )

    n_layers = len(params.weights)
    grad_w: List[np.ndarray] = [np.empty(0)] * n_layers
    grad_b: List[np.ndarray] = [np.empty(0)] * n_layers
    delta = grad_out
    for layer in range(n_layers - 1, -1, -1):
        if layer < n_layers - 1:
            delta = delta * activation_derivative(spec.activations[layer], cache.pre_activations[layer])
        h = cache.inputs[layer]
        if h.ndim == 1:
            grad_w[layer] = np.outer(h, delta)
            grad_b[layer] = delta.copy()
        else:
            grad_w[layer] = h.T @ delta
            grad_b[layer] = delta.sum(axis=0)
        delta = delta @ params.weights[layer].T
    return Parameters(grad_w, grad_b), delta
