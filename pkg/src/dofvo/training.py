"""Mini-batch training for refinement branches and the fusion head.

Everything here is deterministic per seed: one Generator drives the
parameter init and the epoch shuffles, and batch order is part of the
contract. Validation is the contiguous tail of the sample list because
trajectory samples are time-ordered and neighboring pairs are correlated;
a random split would leak the test signal into training.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .activations import ActivationKind
from .combined import CombinedModel
from .errors import DivergenceError, TooFewSamplesError
from .mlp import (
    N_INPUTS,
    STD_FLOOR,
    MlpBranch,
    _batch_forward,
    _batch_gradients,
    apply_step,
    init_branch,
)
from .se3 import DoFVector

OPTIMIZERS = ("adam", "sgd")
MIN_SAMPLE_BATCHES = 10

# curve row: (epoch, train_loss, val_loss); epoch 0 is the untrained model
CurvePoint = tuple[int, float, float]


@dataclass(frozen=True)
class TrainingSample:
    """One frame pair: scaled frontend pose in, ground-truth pose out."""

    input: np.ndarray
    target: np.ndarray
    failed: bool = False

    def __post_init__(self):
        inp = _as_vec(self.input)
        tgt = _as_vec(self.target)
        if not (np.all(np.isfinite(inp)) and np.all(np.isfinite(tgt))):
            raise ValueError("sample contains non-finite values")
        object.__setattr__(self, "input", inp)
        object.__setattr__(self, "target", tgt)


def _as_vec(v) -> np.ndarray:
    if isinstance(v, DoFVector):
        return v.as_array()
    return np.asarray(v, dtype=np.float64).reshape(N_INPUTS)


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple[int, ...] = (32, 32)
    activation: ActivationKind = ActivationKind.RELU
    learning_rate: float = 1e-3
    lr_decay: float = 1.0
    optimizer: str = "adam"
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 120
    val_fraction: float = 0.1
    seed: int = 0
    patience: int = 12
    input_mask: tuple[bool, ...] | None = None

    def __post_init__(self):
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr decay must be in (0, 1]")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1 or self.patience < 1:
            raise ValueError("batch size, epochs and patience must be positive")
        if not 0.0 <= self.val_fraction <= 0.5:
            raise ValueError("validation fraction must be in [0, 0.5]")
        if self.input_mask is not None and len(self.input_mask) != N_INPUTS:
            raise ValueError(f"input mask needs {N_INPUTS} entries")


class _Adam:
    def __init__(self, shapes, lr: float):
        self.lr = lr
        self.b1, self.b2, self.eps = 0.9, 0.999, 1e-8
        self.m = [(np.zeros(ws), np.zeros(bs)) for ws, bs in shapes]
        self.v = [(np.zeros(ws), np.zeros(bs)) for ws, bs in shapes]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        deltas = []
        for i, (gw, gb) in enumerate(grads):
            mw, mb = self.m[i]
            vw, vb = self.v[i]
            mw += (1 - self.b1) * (gw - mw)
            mb += (1 - self.b1) * (gb - mb)
            vw += (1 - self.b2) * (gw * gw - vw)
            vb += (1 - self.b2) * (gb * gb - vb)
            dw = -self.lr * (mw / c1) / (np.sqrt(vw / c2) + self.eps)
            db = -self.lr * (mb / c1) / (np.sqrt(vb / c2) + self.eps)
            deltas.append((dw, db))
        return deltas


class _Momentum:
    def __init__(self, shapes, lr: float, mu: float):
        self.lr = lr
        self.mu = mu
        self.vel = [(np.zeros(ws), np.zeros(bs)) for ws, bs in shapes]

    def step(self, grads):
        deltas = []
        for i, (gw, gb) in enumerate(grads):
            vw, vb = self.vel[i]
            vw *= self.mu
            vw -= self.lr * gw
            vb *= self.mu
            vb -= self.lr * gb
            deltas.append((vw, vb))
        return deltas


def _make_optimizer(cfg: TrainConfig, shapes):
    if cfg.optimizer == "adam":
        return _Adam(shapes, cfg.learning_rate)
    return _Momentum(shapes, cfg.learning_rate, cfg.momentum)


def _split_samples(samples, cfg: TrainConfig):
    usable = [s for s in samples if not s.failed]
    need = MIN_SAMPLE_BATCHES * cfg.batch_size
    if len(usable) < need:
        raise TooFewSamplesError(
            f"need at least {need} non-failed samples, got {len(usable)}"
        )
    x = np.stack([s.input for s in usable])
    t = np.stack([s.target for s in usable])
    n_val = int(round(len(usable) * cfg.val_fraction))
    if n_val == 0:
        return x, t, x[:0], t[:0]
    return x[:-n_val], t[:-n_val], x[-n_val:], t[-n_val:]


def _mse(pred: np.ndarray, target: np.ndarray) -> float:
    err = pred - target
    return float(err @ err) / len(err) if len(err) else float("nan")


def train_branch(
    samples, dof_index: int, cfg: TrainConfig = TrainConfig()
) -> tuple[MlpBranch, list[CurvePoint]]:
    """Fit one branch to target[dof_index] by mini-batch squared error.

    Keeps the best-validation snapshot and restores it at the end, so the
    returned branch never validates worse than the untrained start. With
    val_fraction 0 the full training loss is monitored instead.
    """
    if not 0 <= dof_index < N_INPUTS:
        raise ValueError(f"dof_index must be 0..5, got {dof_index}")
    xt, tt, xv, tv = _split_samples(samples, cfg)
    yt = tt[:, dof_index]
    yv = tv[:, dof_index]
    rng = np.random.default_rng(cfg.seed)

    mean = xt.mean(axis=0)
    std = np.maximum(xt.std(axis=0), STD_FLOOR)
    seed_branch = init_branch(rng, dof_index, cfg.activation, cfg.hidden)
    layers = list(seed_branch.layers)
    mask_cols = None
    if cfg.input_mask is not None:
        mask_cols = np.array([not m for m in cfg.input_mask])
        w0, b0 = layers[0]
        w0 = w0.copy()
        w0[:, mask_cols] = 0.0
        layers[0] = (w0, b0)
    branch = MlpBranch(dof_index, tuple(layers), cfg.activation, mean, std)

    def val_loss(b: MlpBranch) -> float:
        if len(xv):
            return _mse(_batch_forward(b, xv)[0], yv)
        return _mse(_batch_forward(b, xt)[0], yt)

    shapes = [(w.shape, b.shape) for w, b in branch.layers]
    opt = _make_optimizer(cfg, shapes)
    v0 = val_loss(branch)
    curve: list[CurvePoint] = [(0, _mse(_batch_forward(branch, xt)[0], yt), v0)]
    best_loss, best_branch = v0, branch
    stall = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(xt))
        batch_losses = []
        for start in range(0, len(xt), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            grads, loss = _batch_gradients(branch, xt[idx], yt[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"training loss diverged at epoch {epoch}", epoch)
            if mask_cols is not None:
                grads[0][0][:, mask_cols] = 0.0
            try:
                branch = apply_step(branch, opt.step(grads))
            except ValueError:
                raise DivergenceError(
                    f"parameters became non-finite at epoch {epoch}", epoch
                ) from None
            batch_losses.append(loss)
        opt.lr *= cfg.lr_decay
        vl = val_loss(branch)
        if not np.isfinite(vl):
            raise DivergenceError(f"validation loss diverged at epoch {epoch}", epoch)
        curve.append((epoch, float(np.mean(batch_losses)), vl))
        if vl < best_loss:
            best_loss, best_branch = vl, branch
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break
    return best_branch, curve


def _branch_features(model: CombinedModel, x: np.ndarray) -> np.ndarray:
    cols = [_batch_forward(b, x)[0] for b in model.branches]
    return np.hstack([np.column_stack(cols), x])


def train_combined(
    model: CombinedModel, samples, cfg: TrainConfig = TrainConfig()
) -> tuple[CombinedModel, list[CurvePoint]]:
    """Fit only the fusion head; branch parameters stay untouched.

    Branch outputs are precomputed once per split since frozen branches are
    constants. Starting from the model's current head (identity right after
    combine_branches) and restoring the best-validation snapshot guarantees
    the result never validates worse than the stacked branches alone.
    """
    if not all(model.frozen):
        raise ValueError("fusion training requires every branch to be frozen")
    xt, tt, xv, tv = _split_samples(samples, cfg)
    ft = _branch_features(model, xt)
    fv = _branch_features(model, xv) if len(xv) else xv
    rng = np.random.default_rng(cfg.seed)

    w = model.fusion_weight.copy()
    bias = model.fusion_bias.copy()

    def head_loss(wm, bv, feats, targets) -> float:
        err = feats @ wm.T + bv - targets
        return float((err * err).sum()) / len(targets)

    def val_loss(wm, bv) -> float:
        if len(xv):
            return head_loss(wm, bv, fv, tv)
        return head_loss(wm, bv, ft, tt)

    opt = _make_optimizer(cfg, [(w.shape, bias.shape)])
    v0 = val_loss(w, bias)
    curve: list[CurvePoint] = [(0, head_loss(w, bias, ft, tt), v0)]
    best = (v0, w.copy(), bias.copy())
    stall = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(ft))
        batch_losses = []
        for start in range(0, len(ft), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            fb, tb = ft[idx], tt[idx]
            err = fb @ w.T + bias - tb
            loss = float((err * err).sum()) / len(idx)
            if not np.isfinite(loss):
                raise DivergenceError(f"fusion loss diverged at epoch {epoch}", epoch)
            gw = (2.0 / len(idx)) * (err.T @ fb)
            gb = (2.0 / len(idx)) * err.sum(axis=0)
            (dw, db), = opt.step([(gw, gb)])
            w = w + dw
            bias = bias + db
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(bias))):
                raise DivergenceError(
                    f"fusion parameters became non-finite at epoch {epoch}", epoch
                )
            batch_losses.append(loss)
        opt.lr *= cfg.lr_decay
        vl = val_loss(w, bias)
        if not np.isfinite(vl):
            raise DivergenceError(f"fusion validation diverged at epoch {epoch}", epoch)
        curve.append((epoch, float(np.mean(batch_losses)), vl))
        if vl < best[0]:
            best = (vl, w.copy(), bias.copy())
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break
    refined = CombinedModel(model.branches, best[1], best[2], model.frozen)
    return refined, curve


def write_curve_csv(path, curve: list[CurvePoint]) -> None:
    """Training curve as `epoch,train_loss,val_loss` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, train, val in curve:
            writer.writerow([epoch, f"{train:.9g}", f"{val:.9g}"])
