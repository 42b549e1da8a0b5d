"""Post-processing baselines operating on a frozen model or its predictions.

Reject-option classification flips predictions inside a confidence band around
the decision threshold; equalised-odds mixes output labels probabilistically
so the group-wise true/false positive rates match; random perturbation draws
multiplicative-noise copies of the network and keeps the best one under a
bias-bounded selection rule.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .metrics import BiasSpec, GroupError, balanced_accuracy
from .network import MlpModel
from .outcome import DebiasOutcome
from .training import select_threshold

BIAS_BOUND = 0.05
BIAS_MARGIN = 0.01

ROC_BAND_GRID = np.round(np.linspace(0.0, 0.25, 26), 2)


@dataclass(frozen=True)
class RocRule:
    band_lower: float
    band_upper: float
    privileged_group: int  # 0 or 1

    def __post_init__(self):
        if not 0.0 <= self.band_lower <= self.band_upper <= 1.0:
            raise ValueError("band bounds must satisfy 0 <= lower <= upper <= 1")
        if self.privileged_group not in (0, 1):
            raise ValueError("privileged_group must be 0 or 1")

    def to_dict(self) -> dict:
        return {"band_lower": self.band_lower, "band_upper": self.band_upper,
                "privileged_group": self.privileged_group}

    @classmethod
    def from_dict(cls, doc: dict) -> "RocRule":
        return cls(doc["band_lower"], doc["band_upper"], doc["privileged_group"])


def roc_apply(scores, a, t: float, rule: RocRule) -> np.ndarray:
    """Threshold at t, then flip in-band predictions: unprivileged-group members
    strictly inside the band become positive, privileged ones negative."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    a = np.asarray(a, dtype=np.float64).ravel()
    yhat = (scores >= t).astype(np.float64)
    in_band = (scores > rule.band_lower) & (scores < rule.band_upper)
    privileged = a == rule.privileged_group
    yhat[in_band & ~privileged] = 1.0
    yhat[in_band & privileged] = 0.0
    return yhat


def roc_fit(scores, y, a, t: float, bias_spec: BiasSpec,
            band_grid=None, bias_bound: float = BIAS_BOUND,
            margin: float = BIAS_MARGIN) -> RocRule:
    """Search symmetric band half-widths for the best bias/accuracy trade-off.

    The privileged group is the one the initial bias favours. Candidates whose
    absolute bias stays within bias_bound + margin compete on balanced
    accuracy; when none qualifies the global absolute-bias minimiser wins.
    Ties prefer smaller |bias|, then the narrower band.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    a = np.asarray(a, dtype=np.float64).ravel()
    yhat0 = (scores >= t).astype(np.float64)
    mu0 = bias_spec.bias(yhat0, y, a)
    privileged = 0 if mu0 >= 0 else 1
    grid = ROC_BAND_GRID if band_grid is None else np.asarray(band_grid, dtype=np.float64)
    candidates = []
    for w in grid:
        rule = RocRule(max(0.0, t - w), min(1.0, t + w), privileged)
        yhat = roc_apply(scores, a, t, rule)
        candidates.append((rule, bias_spec.bias(yhat, y, a),
                           balanced_accuracy(yhat, y), float(w)))
    feasible = [c for c in candidates if abs(c[1]) <= bias_bound + margin]
    if feasible:
        return max(feasible, key=lambda c: (c[2], -abs(c[1]), -c[3]))[0]
    return min(candidates, key=lambda c: (abs(c[1]), c[3]))[0]


@dataclass(frozen=True)
class EqOddsRule:
    """Per-group mixing probabilities: keep a positive prediction with
    p_keep_pos, flip a negative one to positive with p_flip_neg."""

    p_keep_pos: tuple[float, float]  # indexed by group
    p_flip_neg: tuple[float, float]

    def __post_init__(self):
        for v in (*self.p_keep_pos, *self.p_flip_neg):
            if not -1e-9 <= v <= 1.0 + 1e-9:
                raise ValueError("mixing probabilities must lie in [0, 1]")

    def mixed_rates(self, tpr: np.ndarray, fpr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Analytic mixed TPR/FPR per group given the base rates."""
        p = np.asarray(self.p_keep_pos)
        q = np.asarray(self.p_flip_neg)
        return p * tpr + q * (1.0 - tpr), p * fpr + q * (1.0 - fpr)

    def to_dict(self) -> dict:
        return {"p_keep_pos": list(self.p_keep_pos), "p_flip_neg": list(self.p_flip_neg)}

    @classmethod
    def from_dict(cls, doc: dict) -> "EqOddsRule":
        return cls(tuple(doc["p_keep_pos"]), tuple(doc["p_flip_neg"]))


IDENTITY_RULE = EqOddsRule((1.0, 1.0), (0.0, 0.0))


def group_confusion_rates(yhat, y, a) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(tpr, fpr, n_pos, n_neg) per group; errors on degenerate groups."""
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    a = np.asarray(a, dtype=np.float64).ravel()
    tpr, fpr, npos, nneg = np.zeros(2), np.zeros(2), np.zeros(2), np.zeros(2)
    for g in (0, 1):
        pos = (a == g) & (y == 1)
        neg = (a == g) & (y == 0)
        if not pos.any() or not neg.any():
            raise GroupError(f"group a={g} needs both positive and negative rows")
        tpr[g] = yhat[pos].mean()
        fpr[g] = yhat[neg].mean()
        npos[g], nneg[g] = pos.sum(), neg.sum()
    return tpr, fpr, npos, nneg


def eqodds_fit(yhat, y, a) -> EqOddsRule:
    """Solve the four-variable mixing program by vertex enumeration.

    Constraints equalise the mixed TPRs and FPRs across groups with all
    probabilities in [0, 1]; the objective maximises the mixed balanced
    accuracy of the pooled sample. Every basic feasible solution (two active
    bounds plus the two equalities) is enumerated and the best vertex wins.
    """
    tpr, fpr, npos, nneg = group_confusion_rates(yhat, y, a)
    if abs(tpr[0] - tpr[1]) <= 1e-12 and abs(fpr[0] - fpr[1]) <= 1e-12:
        return IDENTITY_RULE
    # variables x = (p0, q0, p1, q1)
    eq = np.array([
        [tpr[0], 1.0 - tpr[0], -tpr[1], -(1.0 - tpr[1])],
        [fpr[0], 1.0 - fpr[0], -fpr[1], -(1.0 - fpr[1])],
    ])
    wpos = npos / npos.sum()
    wneg = nneg / nneg.sum()
    # mixed BA = 0.5 (1 + sum_g wpos_g mixedTPR_g - wneg_g mixedFPR_g)
    objective = 0.5 * np.array([
        wpos[0] * tpr[0] - wneg[0] * fpr[0],
        wpos[0] * (1 - tpr[0]) - wneg[0] * (1 - fpr[0]),
        wpos[1] * tpr[1] - wneg[1] * fpr[1],
        wpos[1] * (1 - tpr[1]) - wneg[1] * (1 - fpr[1]),
    ])
    best_x, best_val = None, -np.inf
    for fixed in itertools.combinations(range(4), 2):
        free = [i for i in range(4) if i not in fixed]
        for bounds in itertools.product((0.0, 1.0), repeat=2):
            A = np.zeros((4, 4))
            b = np.zeros(4)
            A[:2] = eq
            for row, (i, v) in enumerate(zip(fixed, bounds), start=2):
                A[row, i] = 1.0
                b[row] = v
            if abs(np.linalg.det(A)) < 1e-12:
                continue
            x = np.linalg.solve(A, b)
            if (x < -1e-9).any() or (x > 1.0 + 1e-9).any():
                continue
            if np.abs(eq @ x).max() > 1e-9:
                continue
            val = float(objective @ x)
            if val > best_val + 1e-15:
                best_val, best_x = val, np.clip(x, 0.0, 1.0)
    if best_x is None:  # pragma: no cover - the uniform-mixing line always has vertices
        raise RuntimeError("no feasible mixing vertex found")
    return EqOddsRule((best_x[0], best_x[2]), (best_x[1], best_x[3]))


def eqodds_apply(yhat, a, rule: EqOddsRule, rng: np.random.Generator) -> np.ndarray:
    """Seeded probabilistic label mixing per the fitted rule."""
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    a = np.asarray(a, dtype=np.float64).ravel()
    u = rng.random(yhat.size)
    out = yhat.copy()
    for g in (0, 1):
        grp = a == g
        pos = grp & (yhat == 1)
        neg = grp & (yhat == 0)
        out[pos] = (u[pos] < rule.p_keep_pos[g]).astype(np.float64)
        out[neg] = (u[neg] < rule.p_flip_neg[g]).astype(np.float64)
    return out


@dataclass(frozen=True)
class RandomPerturbConfig:
    trials: int = 101
    noise_sd: float = 0.1
    bias_bound: float = BIAS_BOUND
    margin: float = BIAS_MARGIN
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")


def random_perturb(model: MlpModel, valid_data: Dataset, cfg: RandomPerturbConfig,
                   bias_spec: BiasSpec) -> DebiasOutcome:
    """Multiplicative-noise search over perturbed copies of the network.

    Every trainable parameter of each copy is multiplied by an independent
    Normal(1, noise_sd^2) draw. Copies are scored on validation data with
    threshold re-selection; among copies with |bias| <= bias_bound + margin the
    highest balanced accuracy wins, otherwise the |bias| minimiser. The
    outcome's feasible flag records whether the bound was met.
    """
    rng = np.random.default_rng(cfg.seed)
    trajectory: list[dict] = []
    candidates: list[tuple[float, float, MlpModel]] = []
    for trial in range(cfg.trials):
        copy = model.clone()
        copy.params *= rng.normal(1.0, cfg.noise_sd, copy.params.shape)
        scores = copy.forward(valid_data.features)
        threshold = select_threshold(scores, valid_data.labels)
        copy.threshold = threshold
        yhat = (scores >= threshold).astype(np.float64)
        bias = bias_spec.bias(yhat, valid_data.labels, valid_data.protected)
        ba = balanced_accuracy(yhat, valid_data.labels)
        trajectory.append({"trial": trial, "bias": bias, "balanced_accuracy": ba,
                           "threshold": threshold})
        candidates.append((bias, ba, copy))
    bound = cfg.bias_bound + cfg.margin
    within = [i for i, (bias, _, _) in enumerate(candidates) if abs(bias) <= bound]
    if within:
        chosen = max(within, key=lambda i: (candidates[i][1], -abs(candidates[i][0])))
        feasible = True
    else:
        chosen = min(range(len(candidates)), key=lambda i: abs(candidates[i][0]))
        feasible = False
    return DebiasOutcome(candidates[chosen][2], trajectory, chosen, feasible)


def save_rule(rule, path) -> None:
    kind = "roc" if isinstance(rule, RocRule) else "eqodds"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"kind": kind, **rule.to_dict()}, fh)


def load_rule(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    kind = doc.pop("kind", None)
    if kind == "roc":
        return RocRule.from_dict(doc)
    if kind == "eqodds":
        return EqOddsRule.from_dict(doc)
    raise ValueError(f"unknown rule kind: {kind!r}")
