"""Nonlinearity definitions and forward/derivative consistency."""

import math

import numpy as np
import pytest

from dofvo.activations import (
    ALL_KINDS,
    LEAKY_SLOPE,
    SELU_ALPHA,
    SELU_LAMBDA,
    ActivationKind,
    activation_derivative,
    activation_forward,
)


def central_diff(kind, x, h=1e-6):
    return (activation_forward(kind, x + h) - activation_forward(kind, x - h)) / (2 * h)


def test_relu_values():
    assert activation_forward(ActivationKind.RELU, -1.0) == 0.0
    assert activation_forward(ActivationKind.RELU, 2.0) == 2.0


def test_sigmoid_and_tanh_at_zero():
    assert activation_forward(ActivationKind.SIGMOID, 0.0) == 0.5
    assert activation_forward(ActivationKind.TANH, 0.0) == 0.0


def test_leaky_relu_negative_slope():
    assert activation_forward(ActivationKind.LEAKY_RELU, -2.0) == -2.0 * LEAKY_SLOPE
    assert activation_forward(ActivationKind.LEAKY_RELU, 3.0) == 3.0


def test_elu_matches_expm1():
    assert activation_forward(ActivationKind.ELU, -1.0) == pytest.approx(math.expm1(-1.0))
    assert activation_forward(ActivationKind.ELU, 1.5) == 1.5


def test_selu_constants():
    assert activation_forward(ActivationKind.SELU, 1.0) == pytest.approx(SELU_LAMBDA)
    want = SELU_LAMBDA * SELU_ALPHA * math.expm1(-1.0)
    assert activation_forward(ActivationKind.SELU, -1.0) == pytest.approx(want)
    # the published self-normalizing constants
    assert SELU_LAMBDA == pytest.approx(1.0507, abs=1e-4)
    assert SELU_ALPHA == pytest.approx(1.6733, abs=1e-4)


@pytest.mark.parametrize("kind", ALL_KINDS)
@pytest.mark.parametrize("x", [-0.7, 0.3, 1.9])
def test_derivative_matches_finite_difference(kind, x):
    got = activation_derivative(kind, x)
    want = central_diff(kind, x)
    assert abs(got - want) / max(abs(want), 1e-8) < 1e-5


def test_right_derivative_at_kinks():
    assert activation_derivative(ActivationKind.RELU, 0.0) == 1.0
    assert activation_derivative(ActivationKind.LEAKY_RELU, 0.0) == 1.0
    assert activation_derivative(ActivationKind.ELU, 0.0) == 1.0
    assert activation_derivative(ActivationKind.SELU, 0.0) == SELU_LAMBDA


def test_vectorized_matches_scalar():
    xs = np.linspace(-3.0, 3.0, 41)
    for kind in ALL_KINDS:
        fwd = activation_forward(kind, xs)
        der = activation_derivative(kind, xs)
        for i, x in enumerate(xs):
            assert fwd[i] == activation_forward(kind, float(x))
            assert der[i] == activation_derivative(kind, float(x))


def test_derivative_property_random_points():
    rng = np.random.default_rng(11)
    for kind in ALL_KINDS:
        xs = rng.uniform(-4.0, 4.0, 200)
        xs = xs[np.abs(xs) > 1e-3]  # keep clear of the piecewise kink
        got = activation_derivative(kind, xs)
        want = np.array([central_diff(kind, float(x)) for x in xs])
        rel = np.abs(got - want) / np.maximum(np.abs(want), 1e-8)
        assert rel.max() < 1e-4, kind


def test_no_overflow_for_large_inputs():
    for kind in ALL_KINDS:
        for x in (-500.0, 500.0):
            assert np.isfinite(activation_forward(kind, x))
            assert np.isfinite(activation_derivative(kind, x))


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        activation_forward(99, 1.0)
    with pytest.raises(ValueError):
        activation_derivative(99, 1.0)
