"""Scalar nonlinearities for the refinement networks.

Forward and derivative come in matched pairs; the derivative at a kink
(x = 0 for the piecewise kinds) is the right derivative, so training code
never sees an undefined slope.
"""

from __future__ import annotations

import enum

import numpy as np

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772
LEAKY_SLOPE = 0.01


class ActivationKind(enum.IntEnum):
    """Integer values double as the on-disk activation ids."""

    RELU = 0
    LEAKY_RELU = 1
    ELU = 2
    SELU = 3
    TANH = 4
    SIGMOID = 5


ALL_KINDS = tuple(ActivationKind)

KIND_LABELS = {
    ActivationKind.RELU: "ReLU",
    ActivationKind.LEAKY_RELU: "Leaky ReLU",
    ActivationKind.ELU: "ELU",
    ActivationKind.SELU: "SELU",
    ActivationKind.TANH: "Tanh",
    ActivationKind.SIGMOID: "Sigmoid",
}


def kind_from_name(name: str) -> ActivationKind:
    """Map a config/CLI spelling ("relu", "Leaky ReLU", ...) to its kind."""
    key = name.strip().lower().replace(" ", "_").replace("-", "_")
    for kind in ALL_KINDS:
        if key in (kind.name.lower(), KIND_LABELS[kind].lower().replace(" ", "_")):
            return kind
    raise ValueError(f"unknown activation {name!r}; pick one of "
                     + ", ".join(k.name.lower() for k in ALL_KINDS))


def activation_forward(kind: ActivationKind, x):
    """Apply the nonlinearity elementwise; scalars map to scalars."""
    x = np.asarray(x, dtype=np.float64)
    if kind == ActivationKind.RELU:
        out = np.maximum(x, 0.0)
    elif kind == ActivationKind.LEAKY_RELU:
        out = np.where(x >= 0.0, x, LEAKY_SLOPE * x)
    elif kind == ActivationKind.ELU:
        out = np.where(x >= 0.0, x, np.expm1(np.minimum(x, 0.0)))
    elif kind == ActivationKind.SELU:
        out = SELU_LAMBDA * np.where(
            x >= 0.0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0))
        )
    elif kind == ActivationKind.TANH:
        out = np.tanh(x)
    elif kind == ActivationKind.SIGMOID:
        out = 1.0 / (1.0 + np.exp(-x))
    else:
        raise ValueError(f"unknown activation kind {kind!r}")
    return out if out.ndim else float(out)


def activation_derivative(kind: ActivationKind, x):
    """Elementwise slope of activation_forward (right derivative at kinks)."""
    x = np.asarray(x, dtype=np.float64)
    if kind == ActivationKind.RELU:
        out = np.where(x >= 0.0, 1.0, 0.0)
    elif kind == ActivationKind.LEAKY_RELU:
        out = np.where(x >= 0.0, 1.0, LEAKY_SLOPE)
    elif kind == ActivationKind.ELU:
        out = np.where(x >= 0.0, 1.0, np.exp(np.minimum(x, 0.0)))
    elif kind == ActivationKind.SELU:
        out = SELU_LAMBDA * np.where(
            x >= 0.0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0))
        )
    elif kind == ActivationKind.TANH:
        t = np.tanh(x)
        out = 1.0 - t * t
    elif kind == ActivationKind.SIGMOID:
        s = 1.0 / (1.0 + np.exp(-x))
        out = s * (1.0 - s)
    else:
        raise ValueError(f"unknown activation kind {kind!r}")
    return out if out.ndim else float(out)
