"""Bias gradient descent/ascent: fine-tune a trained network directly on the
differentiable bias proxy.

The sign of the initial hard bias fixes the optimisation direction once. Every
epoch covers the validation set in seeded mini-batches drawn without
replacement; each batch contributes one adaptive (Adam) step on the proxy.
The model is evaluated several times per epoch with threshold re-selection,
and the feasible snapshot with minimal absolute hard bias wins.

Batch-norm running statistics stay frozen throughout, so the fine-tuned
decision function is the deployed eval-mode one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .metrics import BiasSpec, GroupError, balanced_accuracy
from .network import MlpModel
from .outcome import DebiasOutcome, FeasibleBest
from .training import AdamState, select_threshold


@dataclass(frozen=True)
class GdaConfig:
    learning_rate: float = 1e-5
    epochs: int = 100
    batch_size: int = 256
    evals_per_epoch: int = 3
    perf_floor: float = 0.60
    bias_spec: BiasSpec = BiasSpec("spd")
    seed: int = 0
    include_original_candidate: bool = True
    keep_snapshots: bool = False

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1 or self.evals_per_epoch < 1:
            raise ValueError("epochs, batch_size and evals_per_epoch must be at least 1")
        if self.perf_floor <= 0.0:
            raise ValueError("perf_floor must be positive")


class BatchDegenerateError(RuntimeError):
    """Every mini-batch of an epoch lacked a required protected group."""


def proxy_param_gradient(model: MlpModel, batch: Dataset, spec: BiasSpec) -> np.ndarray:
    """Flat gradient of the bias proxy over the batch, eval-mode semantics.
    Raises GroupError when the batch lacks a required group."""
    weights = spec.proxy_score_weights(batch.labels, batch.protected)
    _, cache = model.forward_cached(batch.features, mode="eval")
    grads, _ = model.backward(cache, weights)
    return grads


def run_gda(model: MlpModel, valid_data: Dataset, cfg: GdaConfig) -> DebiasOutcome:
    """Fine-tune on the proxy and return the feasible minimum-|bias| snapshot."""
    spec = cfg.bias_spec
    scores = model.forward(valid_data.features)
    yhat0 = (scores >= model.threshold).astype(np.float64)
    mu0 = spec.bias(yhat0, valid_data.labels, valid_data.protected)
    ba0 = balanced_accuracy(yhat0, valid_data.labels)
    sign = 1.0 if mu0 >= 0 else -1.0
    best = FeasibleBest(cfg.perf_floor)
    if cfg.include_original_candidate:
        best.offer(-1, mu0, ba0, model, model.threshold)
    working = model.clone()
    rng = np.random.default_rng(cfg.seed)
    adam = AdamState(working.params.size)
    n = len(valid_data)
    n_batches = int(np.ceil(n / cfg.batch_size))
    evals = min(cfg.evals_per_epoch, n_batches)
    eval_after = {int(np.ceil(n_batches * (i + 1) / evals)) - 1 for i in range(evals)}
    trajectory: list[dict] = []
    snapshots: list[MlpModel] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        skipped = 0
        eval_index = 0
        for b in range(n_batches):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            batch = valid_data.take(idx)
            try:
                grads = proxy_param_gradient(working, batch, spec)
            except GroupError:
                skipped += 1
            else:
                adam.step(working.params, sign * grads, cfg.learning_rate)
            if b in eval_after:
                vscores = working.forward(valid_data.features)
                threshold = select_threshold(vscores, valid_data.labels)
                vhat = (vscores >= threshold).astype(np.float64)
                bias = spec.bias(vhat, valid_data.labels, valid_data.protected)
                ba = balanced_accuracy(vhat, valid_data.labels)
                trajectory.append({"epoch": epoch, "eval_index": eval_index,
                                   "bias": bias, "balanced_accuracy": ba,
                                   "threshold": threshold, "skipped_batches": skipped})
                best.offer(len(trajectory) - 1, bias, ba, working, threshold)
                if cfg.keep_snapshots:
                    snap = working.clone()
                    snap.threshold = threshold
                    snapshots.append(snap)
                eval_index += 1
        if skipped == n_batches:
            raise BatchDegenerateError(
                f"epoch {epoch}: all {n_batches} mini-batches lacked a protected group")
    if best.found:
        return DebiasOutcome(best.model, trajectory, best.index, True,
                             snapshots if cfg.keep_snapshots else None)
    return DebiasOutcome(model.clone(), trajectory, -1, False,
                         snapshots if cfg.keep_snapshots else None)
