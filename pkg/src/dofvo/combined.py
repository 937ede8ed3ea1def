"""Six refinement branches concatenated behind one linear fusion head.

The fusion head maps the stacked branch outputs plus the raw input
(12 features) to six outputs. It starts as the identity over the branch
outputs, so an untrained head reproduces the individual branches exactly
and fusion training can only improve on them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activations import activation_forward
from .mlp import N_INPUTS, MlpBranch, forward
from .se3 import DoFVector

FUSION_INPUTS = 2 * N_INPUTS


@dataclass(frozen=True)
class CombinedModel:
    branches: tuple[MlpBranch, ...]  # ordered by dof_index
    fusion_weight: np.ndarray  # (6, 12)
    fusion_bias: np.ndarray  # (6,)
    frozen: tuple[bool, ...] = (True,) * N_INPUTS

    def __post_init__(self):
        if len(self.branches) != N_INPUTS:
            raise ValueError(f"need {N_INPUTS} branches, got {len(self.branches)}")
        indices = [b.dof_index for b in self.branches]
        if indices != list(range(N_INPUTS)):
            raise ValueError(f"branches must cover dof 0..5 in order, got {indices}")
        w = np.asarray(self.fusion_weight, dtype=np.float64)
        b = np.asarray(self.fusion_bias, dtype=np.float64)
        if w.shape != (N_INPUTS, FUSION_INPUTS) or b.shape != (N_INPUTS,):
            raise ValueError(f"fusion head shapes {w.shape} / {b.shape} are wrong")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("fusion head has non-finite parameters")
        object.__setattr__(self, "fusion_weight", w)
        object.__setattr__(self, "fusion_bias", b)
        if len(self.frozen) != N_INPUTS:
            raise ValueError("need one frozen flag per branch")

    def _evaluator(self):
        cached = self.__dict__.get("_stacked")
        if cached is None:
            cached = _build_evaluator(self.branches)
            object.__setattr__(self, "_stacked", cached)
        return cached


def identity_fusion() -> tuple[np.ndarray, np.ndarray]:
    """Head that passes branch output i straight to output i."""
    w = np.zeros((N_INPUTS, FUSION_INPUTS))
    w[:, :N_INPUTS] = np.eye(N_INPUTS)
    return w, np.zeros(N_INPUTS)


def combine_branches(branches) -> CombinedModel:
    """Assemble one frozen model from six independently trained branches."""
    by_index: dict[int, MlpBranch] = {}
    for b in branches:
        if b.dof_index in by_index:
            raise ValueError(f"duplicate branch for dof {b.dof_index}")
        by_index[b.dof_index] = b
    missing = [i for i in range(N_INPUTS) if i not in by_index]
    if missing:
        raise ValueError(f"missing branch for dof {missing}")
    w, bias = identity_fusion()
    return CombinedModel(tuple(by_index[i] for i in range(N_INPUTS)), w, bias)


def _build_evaluator(branches: tuple[MlpBranch, ...]):
    """Stack same-shaped branches into batched arrays so one inference is a
    handful of vectorized ops instead of eighteen small matmuls. Falls back
    to the per-branch loop when architectures differ."""
    shapes = [tuple(w.shape for w, _ in b.layers) for b in branches]
    if any(s != shapes[0] for s in shapes):
        def loop_eval(x: np.ndarray) -> np.ndarray:
            return np.array([forward(b, x) for b in branches])

        return loop_eval

    means = np.stack([b.input_mean for b in branches])
    stds = np.stack([b.input_std for b in branches])
    weights = [
        np.stack([b.layers[i][0] for b in branches]) for i in range(len(shapes[0]))
    ]
    biases = [
        np.stack([b.layers[i][1] for b in branches]) for i in range(len(shapes[0]))
    ]
    kinds = [b.activation for b in branches]
    groups = []
    for kind in dict.fromkeys(kinds):
        idx = np.array([i for i, k in enumerate(kinds) if k == kind])
        groups.append((kind, idx))
    single_kind = kinds[0] if all(k == kinds[0] for k in kinds) else None
    last = len(weights) - 1

    def stacked_eval(x: np.ndarray) -> np.ndarray:
        a = (x - means) / stds
        for i in range(last):
            z = np.einsum("bij,bj->bi", weights[i], a) + biases[i]
            if single_kind is not None:
                a = activation_forward(single_kind, z)
            else:
                a = np.empty_like(z)
                for kind, idx in groups:
                    a[idx] = activation_forward(kind, z[idx])
        z = np.einsum("bij,bj->bi", weights[last], a) + biases[last]
        return z[:, 0]

    return stacked_eval


def branch_outputs(model: CombinedModel, x: np.ndarray) -> np.ndarray:
    """The six per-branch predictions for one raw 6-vector."""
    return model._evaluator()(np.asarray(x, dtype=np.float64).reshape(N_INPUTS))


def infer(model: CombinedModel, raw: DoFVector) -> DoFVector:
    """Refined pose estimate; a pure function of (model, raw)."""
    x = raw.as_array()
    feats = np.concatenate([model._evaluator()(x), x])
    out = model.fusion_weight @ feats + model.fusion_bias
    return DoFVector.from_array(out, gimbal_lock=raw.gimbal_lock)
