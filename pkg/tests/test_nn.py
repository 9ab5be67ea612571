import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hvae_pla.nn import (ACTIVATIONS, DenseLayer, NumericalError, ShapeError, TrainConfig,
                         activation_apply, activation_derivative, backward, forward,
                         layer_widths, minibatch_train, momentum_step, stack_backward,
                         stack_forward)


def rel_err(a, b, floor=1e-7):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor))


def test_identity_layer_passes_input_through():
    layer = DenseLayer(np.eye(3), np.zeros(3), "identity")
    x = np.array([[1.0], [-2.0], [0.5]])
    pre, out = forward(layer, x)
    assert np.array_equal(pre, x) and np.array_equal(out, x)


@pytest.mark.parametrize("x, pre, out", [(3.0, 7.0, 7.0), (-1.0, -1.0, 0.0)])
def test_scalar_relu_layer(x, pre, out):
    layer = DenseLayer([[2.0]], [1.0], "relu")
    p, o = forward(layer, np.array([[x]]))
    assert p[0, 0] == pre and o[0, 0] == out


def test_backward_scalar_product_rule():
    layer = DenseLayer([[2.0]], [0.0], "identity")
    pre, _ = forward(layer, np.array([[3.0]]))
    gw, gb, gp = backward(layer, pre, np.array([[3.0]]), np.array([[1.0]]), 1)
    assert (gw[0, 0], gb[0, 0], gp[0, 0]) == (3.0, 1.0, 2.0)


def test_backward_identity_chain():
    layer = DenseLayer(np.eye(1), np.zeros(1), "identity")
    pre, _ = forward(layer, np.array([[0.3]]))
    _, _, gp = backward(layer, pre, np.array([[0.3]]), np.array([[1.0]]))
    assert gp[0, 0] == 1.0


def test_shape_errors():
    layer = DenseLayer(np.ones((2, 3)), np.zeros(2), "tanh")
    with pytest.raises(ShapeError):
        forward(layer, np.ones((2, 4)))
    pre, _ = forward(layer, np.ones((3, 4)))
    with pytest.raises(ShapeError):
        backward(layer, pre, np.ones((3, 4)), np.ones((2, 5)))
    with pytest.raises(ShapeError):
        momentum_step(layer, np.ones((3, 2)), np.ones((2, 1)), TrainConfig())
    with pytest.raises(ShapeError):
        DenseLayer(np.ones((2, 3)), np.zeros(3))


def test_relu_derivative_at_zero_is_zero():
    assert activation_derivative("relu", np.array([0.0]))[0] == 0.0


@pytest.mark.parametrize("kind", ACTIVATIONS)
def test_activation_derivative_matches_finite_difference(kind):
    z = np.linspace(-3, 3, 41) + 0.013  # keep away from the relu kink
    h = 1e-6
    fd = (activation_apply(kind, z + h) - activation_apply(kind, z - h)) / (2 * h)
    assert np.max(np.abs(fd - activation_derivative(kind, z))) < 1e-8


@settings(max_examples=50, deadline=None)
@given(arrays(float, 20, elements=st.floats(-1e3, 1e3)))
def test_activation_bounds(z):
    s = activation_apply("sigmoid", z)
    t = activation_apply("tanh", z)
    r = activation_apply("relu", z)
    assert np.all((s >= 0) & (s <= 1)) and np.all(np.isfinite(s))
    assert np.all((t >= -1) & (t <= 1))
    assert np.all(r >= 0)
    mid = np.abs(z) < 15
    assert np.all((s[mid] > 0) & (s[mid] < 1)) and np.all(np.abs(t[mid]) < 1)


def _random_stack(rng, acts, widths):
    return [DenseLayer.initialize(widths[i], widths[i + 1], a, rng) for i, a in enumerate(acts)]


def _stack_loss(layers, x, target):
    out, _ = stack_forward(layers, x)
    return 0.5 * np.mean(np.sum((out - target) ** 2, axis=0))


@pytest.mark.parametrize("kind", ACTIVATIONS)
@pytest.mark.parametrize("seed", range(3))
def test_stack_gradients_match_central_differences(kind, seed):
    rng = np.random.default_rng(seed)
    depth = int(rng.integers(1, 5))
    widths = list(rng.integers(2, 9, size=depth + 1))
    layers = _random_stack(rng, [kind] * depth, widths)
    for layer in layers:
        layer.bias += rng.normal(0, 0.3, layer.bias.shape)
    x = rng.normal(size=(widths[0], 5))
    target = rng.normal(size=(widths[-1], 5))
    out, cache = stack_forward(layers, x)
    grads, _ = stack_backward(layers, cache, (out - target), x.shape[1])
    h = 1e-5
    for layer, (gw, gb) in zip(layers, grads):
        for param, grad in ((layer.weights, gw), (layer.bias, gb)):
            fd = np.zeros_like(param)
            for idx in np.ndindex(param.shape):
                old = param[idx]
                param[idx] = old + h
                up = _stack_loss(layers, x, target)
                param[idx] = old - h
                down = _stack_loss(layers, x, target)
                param[idx] = old
                fd[idx] = (up - down) / (2 * h)
            assert rel_err(grad, fd) < 1e-4


def test_random_tanh_layer_gradient_against_finite_differences():
    rng = np.random.default_rng(7)
    layer = DenseLayer(rng.normal(size=(3, 4)), rng.normal(size=3), "tanh")
    x = rng.normal(size=(4, 6))
    c = rng.normal(size=(3, 6))

    def loss():
        return np.mean(np.sum(c * forward(layer, x)[1], axis=0))

    pre, _ = forward(layer, x)
    gw, gb, _ = backward(layer, pre, x, c, 6)
    h = 1e-5
    for param, grad in ((layer.weights, gw), (layer.bias, gb)):
        for idx in np.ndindex(param.shape):
            old = param[idx]
            param[idx] = old + h
            up = loss()
            param[idx] = old - h
            down = loss()
            param[idx] = old
            assert abs((up - down) / (2 * h) - grad[idx]) <= 1e-4 * max(abs(grad[idx]), 1e-7) + 1e-10


def test_batch_gradient_is_mean_of_sample_gradients():
    rng = np.random.default_rng(3)
    layer = DenseLayer(rng.normal(size=(3, 4)), rng.normal(size=3), "sigmoid")
    x = rng.normal(size=(4, 5))
    up = rng.normal(size=(3, 5))
    pre, _ = forward(layer, x)
    gw, gb, _ = backward(layer, pre, x, up)
    per = [backward(layer, pre[:, [i]], x[:, [i]], up[:, [i]]) for i in range(5)]
    assert np.allclose(gw, np.mean([p[0] for p in per], axis=0), rtol=1e-13, atol=1e-15)
    assert np.allclose(gb, np.mean([p[1] for p in per], axis=0), rtol=1e-13, atol=1e-15)


def test_momentum_plain_descent():
    layer = DenseLayer([[1.0]], [0.0])
    momentum_step(layer, np.array([[0.5]]), np.array([[0.0]]),
                  TrainConfig(learning_rate=1.0, momentum=0.0))
    assert layer.weights[0, 0] == 0.5


def test_momentum_zero_gradient_is_fixed_point():
    layer = DenseLayer([[1.5]], [0.2])
    momentum_step(layer, np.zeros((1, 1)), np.zeros((1, 1)), TrainConfig(momentum=0.7))
    assert layer.weights[0, 0] == 1.5 and layer.bias[0, 0] == 0.2


def test_momentum_accumulator_unrolls():
    # second accumulator after two identical gradients g: 0.9 * 0.1 g + 0.1 g = 0.19 g
    layer = DenseLayer([[0.0]], [0.0])
    cfg = TrainConfig(learning_rate=1e-3, momentum=0.9)
    g = np.array([[2.0]])
    momentum_step(layer, g, np.zeros((1, 1)), cfg)
    momentum_step(layer, g, np.zeros((1, 1)), cfg)
    assert layer.weight_momentum[0, 0] == pytest.approx(0.19 * 2.0, rel=1e-12)


def test_layer_widths_geometric():
    assert layer_widths(128, 64, 3) == [128, 102, 81, 64]
    assert layer_widths(6, 4, 3)[0] == 6 and layer_widths(6, 4, 3)[-1] == 4


def _toy_problem(seed):
    rng = np.random.default_rng(seed)
    layers = _random_stack(rng, ["tanh", "identity"], [3, 5, 2])
    w_true = rng.normal(size=(2, 3))
    xs = rng.normal(size=(64, 3))

    def step(batch, _rng):
        out, cache = stack_forward(layers, batch)
        diff = out - w_true @ batch
        loss = float(np.mean(np.sum(diff ** 2, axis=0)))
        grads, _ = stack_backward(layers, cache, 2 * diff, batch.shape[1])
        return loss, {"mse": loss}, grads

    return layers, step, xs


def test_minibatch_training_is_deterministic_and_descends():
    runs = []
    for _ in range(2):
        layers, step, xs = _toy_problem(0)
        cfg = TrainConfig(learning_rate=0.05, epochs=30, batch_size=8)
        hist = minibatch_train(layers, step, xs, cfg, np.random.default_rng(1))
        runs.append((hist, [l.weights.copy() for l in layers]))
    assert runs[0][0] == runs[1][0]
    assert all(np.array_equal(a, b) for a, b in zip(runs[0][1], runs[1][1]))
    assert runs[0][0][-1] < 0.2 * runs[0][0][0]


def test_zero_epochs_leave_parameters_untouched():
    layers, step, xs = _toy_problem(2)
    before = [l.weights.copy() for l in layers]
    hist = minibatch_train(layers, step, xs, TrainConfig(epochs=0), np.random.default_rng(0))
    assert hist == [] and all(np.array_equal(a, l.weights) for a, l in zip(before, layers))


def test_non_finite_loss_raises_numerical_error():
    layers, _, xs = _toy_problem(0)

    def step(batch, _rng):
        return float("nan"), {"mse": float("nan")}, None

    with pytest.raises(NumericalError, match="mse"):
        minibatch_train(layers, step, xs, TrainConfig(epochs=1), np.random.default_rng(0))


@pytest.mark.parametrize("kwargs", [{"learning_rate": 0}, {"momentum": 1.0}, {"batch_size": 0},
                                    {"epochs": -1}])
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)
