"""Training and gradient operations for the feedforward engine.

Training minimises binary cross-entropy with Adam, mini-batches drawn from a
seeded shuffle, early stopping on validation loss, and a halve-on-plateau
learning-rate schedule. The returned model is the parameter snapshot with the
lowest validation loss seen during the run.

Gradient operations evaluate the network in eval mode (dropout off, batch-norm
running statistics), so they describe the deployed decision function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .metrics import BiasSpec
from .network import GradReport, MlpModel

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

LOSS_KINDS = ("bce", "proxy_spd", "proxy_eod")


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 1000
    batch_size: int = 64
    learning_rate: float = 1e-3
    early_stop_patience: int = 50
    lr_plateau_patience: int = 10
    lr_decay_factor: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.lr_decay_factor < 1.0:
            raise ValueError("lr_decay_factor must lie in (0, 1)")


def bce_loss(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy with scores clipped away from 0 and 1."""
    s = np.clip(scores, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(labels * np.log(s) + (1.0 - labels) * np.log(1.0 - s)))


def _score_gradient(scores: np.ndarray, loss_kind: str, data: Dataset) -> np.ndarray:
    """d(loss)/d(score_i) for the chosen scalar loss over the batch."""
    if loss_kind == "bce":
        s = np.clip(scores, 1e-12, 1.0 - 1e-12)
        return (-(data.labels / s) + (1.0 - data.labels) / (1.0 - s)) / len(s)
    if loss_kind == "proxy_spd":
        return BiasSpec("spd").proxy_score_weights(data.labels, data.protected)
    if loss_kind == "proxy_eod":
        return BiasSpec("eod").proxy_score_weights(data.labels, data.protected)
    raise ValueError(f"unknown loss kind: {loss_kind!r}")


def _report(model: MlpModel, grads: np.ndarray, preact: dict[int, np.ndarray]) -> GradReport:
    if not np.isfinite(grads).all():
        raise FloatingPointError("non-finite gradient")
    means = []
    for pos, width in enumerate(model.hidden_widths()):
        d = preact.get(pos)
        means.append(d.mean(axis=0) if d is not None else np.zeros(width))
    return GradReport(grads, means)


def grad_params(model: MlpModel, loss_kind: str, batch: Dataset) -> GradReport:
    """Exact gradient of the chosen scalar loss over the batch with respect to
    every trainable parameter, under eval-mode forward semantics."""
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind: {loss_kind!r}")
    if len(batch) == 0:
        raise ValueError("empty batch")
    scores, cache = model.forward_cached(batch.features, mode="eval")
    dscore = _score_gradient(scores, loss_kind, batch)
    grads, preact = model.backward(cache, dscore)
    return _report(model, grads, preact)


def grad_preactivations(model: MlpModel, proxy_kind: str, data: Dataset) -> GradReport:
    """Batch-mean gradient of a bias proxy with respect to every hidden unit's
    pre-activation; pruned units report exactly zero."""
    if proxy_kind not in ("proxy_spd", "proxy_eod"):
        raise ValueError(f"unknown proxy kind: {proxy_kind!r}")
    return grad_params(model, proxy_kind, data)


THRESHOLD_GRID = np.round(np.linspace(0.0, 1.0, 101), 2)


def select_threshold(scores, labels) -> float:
    """Grid point in {0.00, 0.01, ..., 1.00} maximising the balanced accuracy
    of 1{score >= t}; ties broken by the smallest t."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if scores.size != labels.size or scores.size == 0:
        raise ValueError("scores and labels must have equal positive length")
    pos = labels == 1
    npos = int(pos.sum())
    nneg = int(scores.size - npos)
    if npos == 0 or nneg == 0:
        raise ValueError("degenerate labels: both classes required")
    preds = scores[None, :] >= THRESHOLD_GRID[:, None]
    tpr = preds[:, pos].sum(axis=1) / npos
    tnr = (~preds[:, ~pos]).sum(axis=1) / nneg
    ba = 0.5 * (tpr + tnr)
    return float(THRESHOLD_GRID[int(np.argmax(ba))])


class AdamState:
    """Per-parameter first/second moment buffers for the flat parameter vector."""

    def __init__(self, n_params: int):
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grads: np.ndarray, lr: float) -> None:
        self.t += 1
        self.m = ADAM_BETA1 * self.m + (1.0 - ADAM_BETA1) * grads
        self.v = ADAM_BETA2 * self.v + (1.0 - ADAM_BETA2) * grads * grads
        mhat = self.m / (1.0 - ADAM_BETA1**self.t)
        vhat = self.v / (1.0 - ADAM_BETA2**self.t)
        params -= lr * mhat / (np.sqrt(vhat) + ADAM_EPS)


def train(init: MlpModel, train_data: Dataset, valid_data: Dataset,
          cfg: TrainConfig) -> MlpModel:
    """Adam training on binary cross-entropy, returning the snapshot with the
    minimum validation loss. Deterministic given cfg.seed."""
    if len(train_data) == 0 or len(valid_data) == 0:
        raise ValueError("training and validation data must be non-empty")
    model = init.clone()
    rng = np.random.default_rng(cfg.seed)
    n = len(train_data)
    adam = AdamState(model.params.size)
    lr = cfg.learning_rate
    best_loss = np.inf
    best_params = model.params.copy()
    best_stats = model.stats.copy()
    epochs_since_best = 0
    epochs_since_decay = 0
    for _ in range(cfg.max_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            Xb = train_data.features[idx]
            yb = train_data.labels[idx]
            scores, cache = model.forward_cached(Xb, mode="train", rng=rng)
            s = np.clip(scores, 1e-12, 1.0 - 1e-12)
            dscore = (-(yb / s) + (1.0 - yb) / (1.0 - s)) / len(yb)
            grads, _ = model.backward(cache, dscore)
            adam.step(model.params, grads, lr)
        val_scores = model.forward(valid_data.features)
        loss = bce_loss(val_scores, valid_data.labels)
        if not np.isfinite(loss) or not np.isfinite(model.params).all():
            raise FloatingPointError("training diverged: non-finite validation loss")
        if loss < best_loss:
            best_loss = loss
            best_params[:] = model.params
            best_stats[:] = model.stats
            epochs_since_best = 0
            epochs_since_decay = 0
        else:
            epochs_since_best += 1
            epochs_since_decay += 1
            if epochs_since_decay >= cfg.lr_plateau_patience:
                lr *= cfg.lr_decay_factor
                epochs_since_decay = 0
            if epochs_since_best >= cfg.early_stop_patience:
                break
    model.params[:] = best_params
    model.stats[:] = best_stats
    return model
