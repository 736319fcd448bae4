"""Dense-network numerical core.

Plain numpy multilayer perceptrons with hand-written backward passes, the
Adam optimizer, and an early-stopping tracker. Everything here is
deterministic given the generator passed in; nothing touches global RNG
state.

Arrays are float64 throughout. Forward/backward accept either a single
vector ``(dim,)`` or a row-major batch ``(batch, dim)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, TrainingDivergedError

ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass
class Layer:
    """One dense layer: ``y = act(W @ x + b)`` with W of shape (out, in)."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"layer weight {self.weight.shape} incompatible with bias {self.bias.shape}"
            )


@dataclass
class Mlp:
    """A stack of dense layers with a flat parameter view for the optimizer."""

    layers: list[Layer]

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise ShapeError(
                    f"layer widths mismatch: {prev.weight.shape[0]} feeds {nxt.weight.shape[1]}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def parameters(self) -> list[np.ndarray]:
        """Flat list [W0, b0, W1, b1, ...]; mutating entries mutates the net."""
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out


def build_mlp(dims: list[int], rng: np.random.Generator, output_activation: str = "identity",
              hidden_activation: str = "relu") -> Mlp:
    """Build an MLP with Glorot-uniform weights.

    ``dims`` lists the widths [input, hidden..., output]. Weights are drawn
    uniformly in +-sqrt(6 / (fan_in + fan_out)); biases start at zero.
    """
    if len(dims) < 2:
        raise ValueError("need at least input and output dims")
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        bias = np.zeros(fan_out)
        act = output_activation if i == len(dims) - 2 else hidden_activation
        layers.append(Layer(weight, bias, act))
    return Mlp(layers)


@dataclass
class ForwardCache:
    """Every pre- and post-activation of one forward call, for backward."""

    inputs: list[np.ndarray]  # input seen by each layer
    pre: list[np.ndarray]  # pre-activation of each layer
    output: np.ndarray
    single: bool  # True if the original input was a 1-D vector


def _as_batch(x: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"{what} has shape {x.shape}, expected (..., {dim})")
    return x, single


def mlp_forward(mlp: Mlp, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run the net on ``x`` and keep all intermediates for the backward pass."""
    h, single = _as_batch(x, mlp.input_dim, "input")
    inputs, pres = [], []
    for layer in mlp.layers:
        inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        pres.append(z)
        if layer.activation == "relu":
            h = np.maximum(z, 0.0)
        elif layer.activation == "tanh":
            h = np.tanh(z)
        else:
            h = z
    out = h[0] if single else h
    return out, ForwardCache(inputs, pres, out, single)


def mlp_backward(
    mlp: Mlp, cache: ForwardCache, output_gradient: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Backpropagate ``output_gradient`` through the cached forward pass.

    Returns (grads, input_gradient) where grads mirrors ``mlp.parameters()``.
    With a batched cache the parameter gradients are summed over the batch.
    """
    g, _ = _as_batch(output_gradient, mlp.output_dim, "output_gradient")
    if len(cache.inputs) != len(mlp.layers) or cache.inputs[0].shape[1] != mlp.input_dim:
        raise ShapeError("cache does not match this network")
    if g.shape[0] != cache.inputs[0].shape[0]:
        raise ShapeError(
            f"output_gradient batch {g.shape[0]} != cached batch {cache.inputs[0].shape[0]}"
        )
    grads: list[np.ndarray] = [None] * (2 * len(mlp.layers))  # type: ignore[list-item]
    for i in range(len(mlp.layers) - 1, -1, -1):
        layer = mlp.layers[i]
        if layer.activation == "relu":
            g = g * (cache.pre[i] > 0.0)
        elif layer.activation == "tanh":
            g = g * (1.0 - np.tanh(cache.pre[i]) ** 2)
        grads[2 * i] = g.T @ cache.inputs[i]
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.weight
    return grads, (g[0] if cache.single else g)


@dataclass
class AdamState:
    """Adam moment accumulators, one pair per parameter array."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def adam_init(params: list[np.ndarray], learning_rate: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    return AdamState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def clip_global_norm(grads: list[np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``.

    Returns the pre-clip norm. ``max_norm <= 0`` disables clipping.
    """
    total = math.sqrt(sum(float(np.square(g).sum()) for g in grads))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """One Adam update, applied to ``params`` in place."""
    if len(grads) != len(params):
        raise ShapeError(f"{len(grads)} gradients for {len(params)} parameters")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


@dataclass
class EarlyStopping:
    """Tracks validation loss; says stop after `patience` epochs without improvement.

    Keeps a copy of the best parameters so training can return the best
    snapshot rather than the last one.
    """

    patience: int = 10
    best_loss: float = math.inf
    epochs_since_improvement: int = 0
    best_snapshot: list[np.ndarray] | None = field(default=None)

    def update(self, validation_loss: float, params: list[np.ndarray]) -> str:
        """Record one epoch's validation loss; returns "continue" or "stop"."""
        if not math.isfinite(validation_loss):
            raise TrainingDivergedError(f"non-finite validation loss {validation_loss}")
        if validation_loss < self.best_loss:
            self.best_loss = validation_loss
            self.epochs_since_improvement = 0
            self.best_snapshot = [p.copy() for p in params]
        else:
            self.epochs_since_improvement += 1
        return "stop" if self.epochs_since_improvement > self.patience else "continue"

    def restore(self, params: list[np.ndarray]) -> None:
        """Copy the best snapshot back into ``params`` (no-op if never improved)."""
        if self.best_snapshot is None:
            return
        for p, best in zip(params, self.best_snapshot):
            p[...] = best
