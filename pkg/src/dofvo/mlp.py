"""Per-degree-of-freedom regression networks.

One branch is a tiny fully connected net: z-scored 6-vector in, hidden
affine+activation layers, one linear scalar out. Forward and reverse passes
are hand-rolled numpy; there is no autograd and none is needed at this size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activations import ActivationKind, activation_derivative, activation_forward

N_INPUTS = 6
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class MlpBranch:
    """Network for one motion component, identified by dof_index (0..5:
    tx, ty, tz, rx, ry, rz). `layers` holds (weight, bias) pairs; the last
    pair is the linear output row."""

    dof_index: int
    layers: tuple[tuple[np.ndarray, np.ndarray], ...]
    activation: ActivationKind
    input_mean: np.ndarray = field(default_factory=lambda: np.zeros(N_INPUTS))
    input_std: np.ndarray = field(default_factory=lambda: np.ones(N_INPUTS))

    def __post_init__(self):
        if not 0 <= self.dof_index < N_INPUTS:
            raise ValueError(f"dof_index must be 0..5, got {self.dof_index}")
        if not self.layers:
            raise ValueError("branch needs at least the output layer")
        layers = tuple(
            (np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64))
            for w, b in self.layers
        )
        object.__setattr__(self, "layers", layers)
        prev = N_INPUTS
        for i, (w, b) in enumerate(layers):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if w.shape[1] != prev:
                raise ValueError(
                    f"layer {i} expects {w.shape[1]} inputs, previous layer gives {prev}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")
            prev = w.shape[0]
        if prev != 1:
            raise ValueError(f"output layer must produce one value, got {prev}")
        mean = np.asarray(self.input_mean, dtype=np.float64).reshape(N_INPUTS)
        std = np.asarray(self.input_std, dtype=np.float64).reshape(N_INPUTS)
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
            raise ValueError("normalization vectors must be finite")
        if np.any(std < STD_FLOOR):
            raise ValueError(f"normalization std below {STD_FLOOR}")
        object.__setattr__(self, "input_mean", mean)
        object.__setattr__(self, "input_std", std)

    @property
    def activation_kind(self) -> ActivationKind:
        return self.activation

    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in self.layers)


def init_branch(
    rng: np.random.Generator,
    dof_index: int,
    activation: ActivationKind,
    hidden: tuple[int, ...] = (32, 32),
) -> MlpBranch:
    """Random starting point. Saturating kinds get Xavier scaling, SELU the
    unit-variance scaling its self-normalization assumes, and the rest of
    the rectifier family He scaling; biases start at zero."""
    dims = [N_INPUTS, *hidden, 1]
    saturating = activation in (ActivationKind.TANH, ActivationKind.SIGMOID)
    layers = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        if saturating:
            scale = np.sqrt(2.0 / (fan_in + fan_out))
        elif activation == ActivationKind.SELU:
            scale = np.sqrt(1.0 / fan_in)
        else:
            scale = np.sqrt(2.0 / fan_in)
        layers.append((rng.normal(0.0, scale, (fan_out, fan_in)), np.zeros(fan_out)))
    return MlpBranch(dof_index, tuple(layers), activation)


def _batch_forward(
    branch: MlpBranch, x: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    """Returns (outputs (N,), pre-activations per layer, layer inputs)."""
    a = (np.atleast_2d(x) - branch.input_mean) / branch.input_std
    pres: list[np.ndarray] = []
    inputs: list[np.ndarray] = []
    last = len(branch.layers) - 1
    for i, (w, b) in enumerate(branch.layers):
        inputs.append(a)
        z = a @ w.T + b
        pres.append(z)
        a = z if i == last else activation_forward(branch.activation, z)
    return a[:, 0], pres, inputs


def forward(branch: MlpBranch, inp: np.ndarray) -> float:
    """Scalar prediction for one 6-vector."""
    y, _, _ = _batch_forward(branch, np.asarray(inp, dtype=np.float64).reshape(1, N_INPUTS))
    return float(y[0])


def _batch_gradients(
    branch: MlpBranch, x: np.ndarray, targets: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], float]:
    """Gradients of the mean squared error over the batch."""
    y, pres, inputs = _batch_forward(branch, x)
    n = len(y)
    err = y - targets
    loss = float(err @ err) / n
    delta = (2.0 / n) * err[:, None]
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(branch.layers)
    for i in range(len(branch.layers) - 1, -1, -1):
        w, _ = branch.layers[i]
        grads[i] = (delta.T @ inputs[i], delta.sum(axis=0))
        if i > 0:
            delta = (delta @ w) * activation_derivative(branch.activation, pres[i - 1])
    return grads, loss


def backward(
    branch: MlpBranch, inp: np.ndarray, target: float
) -> tuple[list[tuple[np.ndarray, np.ndarray]], float]:
    """Exact gradients of (forward(inp) - target)^2 for every parameter."""
    x = np.asarray(inp, dtype=np.float64).reshape(1, N_INPUTS)
    return _batch_gradients(branch, x, np.array([float(target)]))


def apply_step(
    branch: MlpBranch, deltas: list[tuple[np.ndarray, np.ndarray]]
) -> MlpBranch:
    """New branch with `deltas` added to each (weight, bias) pair."""
    layers = tuple(
        (w + dw, b + db) for (w, b), (dw, db) in zip(branch.layers, deltas)
    )
    return MlpBranch(
        branch.dof_index, layers, branch.activation, branch.input_mean, branch.input_std
    )


def gradient_check(
    branch: MlpBranch, inp: np.ndarray, target: float, h: float = 1e-6
) -> float:
    """Max relative gap between analytic gradients and central differences.

    Caller keeps pre-activations clear of kinks (> 10h); resample the
    network or the input when that fails.
    """
    x = np.asarray(inp, dtype=np.float64).reshape(N_INPUTS)
    grads, _ = backward(branch, x, target)

    def loss_with(layers) -> float:
        b = MlpBranch(
            branch.dof_index, layers, branch.activation, branch.input_mean, branch.input_std
        )
        return (forward(b, x) - target) ** 2

    worst = 0.0
    for li, (w, bvec) in enumerate(branch.layers):
        for arr_idx, arr in ((0, w), (1, bvec)):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                plus = [list(map(np.copy, lay)) for lay in branch.layers]
                minus = [list(map(np.copy, lay)) for lay in branch.layers]
                plus[li][arr_idx][idx] += h
                minus[li][arr_idx][idx] -= h
                numeric = (loss_with(plus) - loss_with(minus)) / (2.0 * h)
                analytic = grads[li][arr_idx][idx]
                gap = abs(analytic - numeric) / max(abs(analytic), 1e-8)
                worst = max(worst, gap)
    return worst
