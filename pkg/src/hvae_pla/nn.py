"""Dense feed-forward kernel with explicit backward pass and momentum updates.

Matrices are 2-D ``float64`` numpy arrays laid out column-per-sample: a batch of
``n`` inputs of dimension ``d`` is a ``(d, n)`` array, so a layer computes
``W @ Z_prev + B`` with ``B`` broadcast across columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("sigmoid", "tanh", "relu", "identity")


class ShapeError(ValueError):
    """Raised when array shapes do not line up with a layer."""


@dataclass
class TrainConfig:
    """Mini-batch gradient descent settings.

    ``momentum`` is the smoothing coefficient of the gradient accumulator,
    not a classical heavy-ball coefficient: the accumulator is an exponential
    moving average of the raw gradients.
    """

    learning_rate: float = 1e-3
    momentum: float = 0.9
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")


def activation_apply(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "sigmoid":
        # split by sign so exp never overflows
        out = np.empty_like(z, dtype=float)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "identity":
        return np.array(z, dtype=float, copy=True)
    raise ValueError(f"unknown activation {kind!r}")


def activation_derivative(kind: str, z: np.ndarray) -> np.ndarray:
    """Derivative of the activation evaluated at the pre-activation ``z``.

    The ReLU derivative at exactly zero is taken as 0.
    """
    if kind == "sigmoid":
        s = activation_apply("sigmoid", z)
        return s * (1.0 - s)
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if kind == "relu":
        return (z > 0).astype(float)
    if kind == "identity":
        return np.ones_like(z, dtype=float)
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"
    name: str = ""
    weight_momentum: np.ndarray = field(default=None, repr=False)
    bias_momentum: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float).reshape(-1, 1)
        if self.weights.ndim != 2 or self.bias.shape[0] != self.weights.shape[0]:
            raise ShapeError(
                f"layer {self.name!r}: weights {self.weights.shape} and bias "
                f"{self.bias.shape} disagree"
            )
        if self.weight_momentum is None:
            self.weight_momentum = np.zeros_like(self.weights)
        if self.bias_momentum is None:
            self.bias_momentum = np.zeros_like(self.bias)

    @classmethod
    def initialize(cls, in_dim: int, out_dim: int, activation: str,
                   rng: np.random.Generator, name: str = "") -> "DenseLayer":
        """Glorot-uniform weights, zero bias, zero momentum."""
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        w = rng.uniform(-limit, limit, size=(out_dim, in_dim))
        return cls(w, np.zeros((out_dim, 1)), activation, name)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation, self.name,
                          self.weight_momentum.copy(), self.bias_momentum.copy())


def forward(layer: DenseLayer, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(pre_activation, output)`` for a column batch ``x``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != layer.in_dim:
        raise ShapeError(
            f"layer {layer.name!r} expects ({layer.in_dim}, batch) input, got {x.shape}"
        )
    pre = layer.weights @ x + layer.bias
    return pre, activation_apply(layer.activation, pre)


def backward(layer: DenseLayer, pre: np.ndarray, prev_out: np.ndarray,
             upstream: np.ndarray, batch_size: int | None = None):
    """Gradients of a batch-mean loss through one layer.

    ``upstream`` holds the per-sample gradient of the loss w.r.t. this layer's
    output (one column per sample). Weight and bias gradients carry the
    ``1/batch_size`` factor; the gradient passed down to the previous layer
    stays per-sample.

    Returns ``(grad_w, grad_b, grad_prev)``.
    """
    if upstream.shape != pre.shape or pre.shape[0] != layer.out_dim:
        raise ShapeError(
            f"layer {layer.name!r}: upstream {upstream.shape} vs cached {pre.shape}"
        )
    if prev_out.shape != (layer.in_dim, pre.shape[1]):
        raise ShapeError(
            f"layer {layer.name!r}: cached input {prev_out.shape} does not match "
            f"({layer.in_dim}, {pre.shape[1]})"
        )
    n = pre.shape[1] if batch_size is None else batch_size
    delta = upstream * activation_derivative(layer.activation, pre)
    grad_w = delta @ prev_out.T / n
    grad_b = delta.sum(axis=1, keepdims=True) / n
    grad_prev = layer.weights.T @ delta
    return grad_w, grad_b, grad_prev


def momentum_step(layer: DenseLayer, grad_w: np.ndarray, grad_b: np.ndarray,
                  config: TrainConfig) -> DenseLayer:
    """Smooth the gradients into the layer's accumulators and take one step.

    Updates ``layer`` in place and returns it.
    """
    if grad_w.shape != layer.weights.shape or grad_b.shape != layer.bias.shape:
        raise ShapeError(f"layer {layer.name!r}: gradient shapes do not match parameters")
    mom = config.momentum
    layer.weight_momentum *= mom
    layer.weight_momentum += (1.0 - mom) * grad_w
    layer.bias_momentum *= mom
    layer.bias_momentum += (1.0 - mom) * grad_b
    layer.weights -= config.learning_rate * layer.weight_momentum
    layer.bias -= config.learning_rate * layer.bias_momentum
    return layer


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, batch, term, value):
        super().__init__(f"non-finite loss term {term!r}={value} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.term = term


def stack_forward(layers, x):
    """Run ``x`` through ``layers``; returns the output and a cache for :func:`stack_backward`."""
    cache = []
    for layer in layers:
        pre, out = forward(layer, x)
        cache.append((x, pre))
        x = out
    return x, cache


def stack_backward(layers, cache, upstream, batch_size):
    """Backpropagate through a stack. Returns per-layer ``(grad_w, grad_b)`` and the input gradient."""
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        prev_out, pre = cache[i]
        gw, gb, upstream = backward(layers[i], pre, prev_out, upstream, batch_size)
        grads[i] = (gw, gb)
    return grads, upstream


def layer_widths(in_dim, out_dim, depth):
    """Geometric interpolation of ``depth + 1`` widths from ``in_dim`` to ``out_dim``."""
    return [int(round(in_dim ** (1 - k / depth) * out_dim ** (k / depth))) for k in range(depth + 1)]


def minibatch_train(layers, loss_and_grads, samples, config, rng, log=None):
    """Mini-batch gradient descent with smoothed-gradient momentum.

    ``samples`` is ``(n, d)`` with one row per sample. ``loss_and_grads(batch, rng)``
    receives a ``(d, b)`` column batch and returns ``(total, terms, grads)`` with
    ``grads`` aligned to ``layers``. Returns the per-epoch mean total loss.
    """
    history = []
    n = samples.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            loss, terms, grads = loss_and_grads(samples[idx].T, rng)
            if not np.isfinite(loss):
                bad = next((k for k, v in terms.items() if not np.isfinite(v)), "total")
                raise NumericalError(epoch, b, bad, terms.get(bad, loss))
            for layer, (gw, gb) in zip(layers, grads):
                momentum_step(layer, gw, gb, config)
            total += loss * len(idx)
        history.append(total / n)
        if log is not None:
            log(epoch, history[-1])
    return history
