"""Greedy unit pruning driven by the gradient-based bias influence.

Each step scores every active hidden unit by the batch-mean gradient of the
differentiable bias proxy with respect to its pre-activation, signed by the
direction the initial bias needs to move, prunes the most influential units,
re-selects the decision threshold on validation data, and records the hard
bias and balanced accuracy. The returned model is the feasible snapshot with
minimal absolute bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .metrics import BiasSpec, balanced_accuracy
from .network import MlpModel
from .outcome import DebiasOutcome, FeasibleBest
from .training import grad_preactivations, select_threshold


@dataclass(frozen=True)
class PruneConfig:
    steps: int = 64                       # number of prune/evaluate rounds
    mode: str = "topk"                    # "topk" or "quantile"
    units_per_step: int = 1               # topk mode only
    perf_floor: float = 0.55
    bias_spec: BiasSpec = BiasSpec("spd")
    layers_in_scope: tuple[int, ...] | None = None  # hidden layer indices, None = all
    include_original_candidate: bool = True
    keep_snapshots: bool = False

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be at least 1")
        if self.mode not in ("topk", "quantile"):
            raise ValueError(f"unknown prune mode: {self.mode!r}")
        if self.mode == "topk" and self.units_per_step < 1:
            raise ValueError("units_per_step must be at least 1")
        if self.perf_floor <= 0.0:
            # floors above 1 are permitted: they are simply unreachable
            raise ValueError("perf_floor must be positive")


def influence(model: MlpModel, bias_spec: BiasSpec, data: Dataset,
              layers_in_scope=None) -> list[tuple[int, int, float]]:
    """Per-unit influence scores (hidden layer, unit, value) for every active
    in-scope unit; pruned units are excluded."""
    scope = set(range(len(model.masks))) if layers_in_scope is None else set(layers_in_scope)
    report = grad_preactivations(model, f"proxy_{bias_spec.measure}", data)
    out = []
    for layer, grads in enumerate(report.preact_grads):
        if layer not in scope:
            continue
        mask = model.masks[layer]
        for unit in range(grads.size):
            if mask[unit] > 0:
                out.append((layer, unit, float(grads[unit])))
    return out


def nearest_rank_quantile(values: np.ndarray, alpha: float) -> float:
    """Empirical quantile by the nearest-rank rule: the ceil(alpha*n)-th order
    statistic, with alpha=0 mapping to the minimum."""
    ordered = np.sort(values)
    rank = int(np.ceil(alpha * ordered.size))
    return float(ordered[max(rank - 1, 0)])


def prune_step(model: MlpModel, influences: list[tuple[int, int, float]],
               initial_bias_sign: float, cfg: PruneConfig) -> tuple[MlpModel, list[tuple[int, int]]]:
    """Prune one round of units in place.

    Quantile mode removes every active unit whose signed influence strictly
    exceeds the (1 - 1/steps) nearest-rank quantile of the active pool; topk
    mode removes the units_per_step largest signed influences, ties broken by
    (layer, unit) ascending.
    """
    if not influences:
        raise ValueError("network exhausted: no active units in scope")
    sign = 1.0 if initial_bias_sign >= 0 else -1.0
    signed = [(sign * value, layer, unit) for layer, unit, value in influences]
    pruned: list[tuple[int, int]] = []
    if cfg.mode == "quantile":
        tau = nearest_rank_quantile(np.array([s for s, _, _ in signed]),
                                    1.0 - 1.0 / cfg.steps)
        for s, layer, unit in signed:
            if s > tau:
                model.prune_unit(layer, unit)
                pruned.append((layer, unit))
    else:
        signed.sort(key=lambda t: (-t[0], t[1], t[2]))
        for s, layer, unit in signed[:cfg.units_per_step]:
            model.prune_unit(layer, unit)
            pruned.append((layer, unit))
    return model, pruned


def _evaluate(model: MlpModel, valid: Dataset, spec: BiasSpec) -> tuple[float, float, np.ndarray]:
    scores = model.forward(valid.features)
    yhat = (scores >= model.threshold).astype(np.float64)
    bias = spec.bias(yhat, valid.labels, valid.protected)
    return bias, balanced_accuracy(yhat, valid.labels), scores


def run_pruning(model: MlpModel, valid_data: Dataset, cfg: PruneConfig) -> DebiasOutcome:
    """Full pruning procedure against validation data.

    The initial bias is measured from hard predictions at the model's own
    threshold and fixes the pruning direction for the whole run. Influence is
    recomputed after every step. Exhausting the in-scope units ends the loop
    early with a partial trajectory.
    """
    spec = cfg.bias_spec
    mu0, ba0, _ = _evaluate(model, valid_data, spec)
    sign = 1.0 if mu0 >= 0 else -1.0
    best = FeasibleBest(cfg.perf_floor)
    if cfg.include_original_candidate:
        best.offer(-1, mu0, ba0, model, model.threshold)
    working = model.clone()
    trajectory: list[dict] = []
    snapshots: list[MlpModel] = []
    for step in range(cfg.steps):
        scores = influence(working, spec, valid_data, cfg.layers_in_scope)
        if not scores:
            break
        _, pruned = prune_step(working, scores, sign, cfg)
        bias, ba, threshold = _step_eval(working, valid_data, spec)
        trajectory.append(_record(step, bias, ba, threshold, pruned))
        rec = trajectory[-1]
        best.offer(step, rec["bias"], rec["balanced_accuracy"], working, rec["threshold"])
        if cfg.keep_snapshots:
            snap = working.clone()
            snap.threshold = rec["threshold"]
            snapshots.append(snap)
    if best.found:
        return DebiasOutcome(best.model, trajectory, best.index, True,
                             snapshots if cfg.keep_snapshots else None)
    return DebiasOutcome(model.clone(), trajectory, -1, False,
                         snapshots if cfg.keep_snapshots else None)


def _step_eval(model: MlpModel, valid: Dataset, spec: BiasSpec) -> tuple[float, float, float]:
    scores = model.forward(valid.features)
    threshold = select_threshold(scores, valid.labels)
    yhat = (scores >= threshold).astype(np.float64)
    bias = spec.bias(yhat, valid.labels, valid.protected)
    return bias, balanced_accuracy(yhat, valid.labels), threshold


def _record(step: int, bias: float, ba: float, threshold: float,
            pruned: list[tuple[int, int]]) -> dict:
    return {"step": step, "bias": bias, "balanced_accuracy": ba,
            "threshold": threshold, "pruned_units": [[l, u] for l, u in pruned]}
