import itertools

import numpy as np
import pytest

from conftest import random_batch, random_model
from fairtune.metrics import BiasSpec, GroupError, balanced_accuracy, spd
from fairtune.postprocess import (EqOddsRule, IDENTITY_RULE, RandomPerturbConfig,
                                  RocRule, eqodds_apply, eqodds_fit,
                                  group_confusion_rates, load_rule, random_perturb,
                                  roc_apply, roc_fit, save_rule)
from fairtune.training import select_threshold


# ------------------------------------------------------------------ ROC

def biased_scores(seed=0, n=400):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 2, n).astype(float)
    y = rng.integers(0, 2, n).astype(float)
    scores = np.clip(0.45 + 0.25 * y + 0.18 * a + 0.12 * rng.normal(size=n), 0.0, 1.0)
    return scores, y, a


def test_roc_zero_band_identity():
    scores, y, a = biased_scores(1)
    rule = RocRule(0.5, 0.5, privileged_group=1)
    np.testing.assert_array_equal(roc_apply(scores, a, 0.5, rule),
                                  (scores >= 0.5).astype(float))


def test_roc_flip_rule_in_band():
    scores = np.array([0.49, 0.51, 0.1, 0.9])
    a = np.array([0.0, 0.0, 0.0, 0.0])  # everyone unprivileged
    rule = RocRule(0.4, 0.6, privileged_group=1)
    out = roc_apply(scores, a, 0.5, rule)
    np.testing.assert_array_equal(out, [1, 1, 0, 1])
    assert out[:2].mean() == 1.0


def test_roc_privileged_flip_negative():
    scores = np.array([0.49, 0.51])
    a = np.array([1.0, 1.0])
    out = roc_apply(scores, a, 0.5, RocRule(0.4, 0.6, privileged_group=1))
    np.testing.assert_array_equal(out, [0, 0])


def roc_oracle(scores, y, a, t, spec, bound=0.05, margin=0.01):
    """Exhaustive re-implementation of the band search."""
    yhat0 = (np.asarray(scores) >= t).astype(float)
    privileged = 0 if spec.bias(yhat0, y, a) >= 0 else 1
    rows = []
    for k in range(26):
        w = round(k / 100, 2)
        rule = RocRule(max(0.0, t - w), min(1.0, t + w), privileged)
        yhat = roc_apply(scores, a, t, rule)
        rows.append((rule, spec.bias(yhat, y, a), balanced_accuracy(yhat, y), w))
    ok = [r for r in rows if abs(r[1]) <= bound + margin]
    if ok:
        return max(ok, key=lambda r: (r[2], -abs(r[1]), -r[3]))[0]
    return min(rows, key=lambda r: (abs(r[1]), r[3]))[0]


def test_roc_fit_matches_exhaustive_oracle():
    for seed in range(5):
        scores, y, a = biased_scores(seed)
        t = select_threshold(scores, y)
        spec = BiasSpec("spd")
        assert roc_fit(scores, y, a, t, spec) == roc_oracle(scores, y, a, t, spec)


def test_roc_rule_serialization(tmp_path):
    rule = RocRule(0.4, 0.6, 1)
    save_rule(rule, tmp_path / "rule.json")
    assert load_rule(tmp_path / "rule.json") == rule


# ------------------------------------------------------------------ Eq. odds

def rates_to_sample(tpr, fpr, per_cell=200):
    """Build (yhat, y, a) whose group confusion rates are exactly tpr/fpr."""
    yhat, y, a = [], [], []
    for g in (0, 1):
        k = int(round(tpr[g] * per_cell))
        yhat += [1] * k + [0] * (per_cell - k)
        y += [1] * per_cell
        a += [g] * per_cell
        k = int(round(fpr[g] * per_cell))
        yhat += [1] * k + [0] * (per_cell - k)
        y += [0] * per_cell
        a += [g] * per_cell
    return np.array(yhat, float), np.array(y, float), np.array(a, float)


def mixed_ba(rule, tpr, fpr, npos, nneg):
    mtpr, mfpr = rule.mixed_rates(np.asarray(tpr), np.asarray(fpr))
    wpos = np.asarray(npos) / np.sum(npos)
    wneg = np.asarray(nneg) / np.sum(nneg)
    return 0.5 * (1.0 + float(wpos @ mtpr) - float(wneg @ mfpr))


def test_eqodds_identity_when_already_fair():
    yhat, y, a = rates_to_sample([0.8, 0.8], [0.2, 0.2])
    assert eqodds_fit(yhat, y, a) == IDENTITY_RULE


def test_eqodds_rule_equalizes_rates():
    yhat, y, a = rates_to_sample([0.9, 0.6], [0.3, 0.1])
    rule = eqodds_fit(yhat, y, a)
    tpr, fpr, _, _ = group_confusion_rates(yhat, y, a)
    mtpr, mfpr = rule.mixed_rates(tpr, fpr)
    assert abs(mtpr[0] - mtpr[1]) <= 1e-9
    assert abs(mfpr[0] - mfpr[1]) <= 1e-9


def test_eqodds_random_group_forces_diagonal():
    yhat, y, a = rates_to_sample([0.5, 0.9], [0.5, 0.2])  # group 0 is a coin flip
    rule = eqodds_fit(yhat, y, a)
    tpr, fpr, npos, nneg = group_confusion_rates(yhat, y, a)
    assert mixed_ba(rule, tpr, fpr, npos, nneg) == pytest.approx(0.5, abs=1e-9)


def eqodds_grid_oracle(tpr, fpr, npos, nneg, step=0.01):
    """Dense search over every pair of fixed variables on the constraint surface."""
    eq = np.array([
        [tpr[0], 1 - tpr[0], -tpr[1], -(1 - tpr[1])],
        [fpr[0], 1 - fpr[0], -fpr[1], -(1 - fpr[1])],
    ])
    best = -np.inf
    grid = np.arange(0.0, 1.0 + step / 2, step)
    for fixed in itertools.combinations(range(4), 2):
        free = [i for i in range(4) if i not in fixed]
        A = eq[:, free]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        Ainv = np.linalg.inv(A)
        for v0 in grid:
            for v1 in grid:
                rhs = -eq[:, fixed] @ np.array([v0, v1])
                sol = Ainv @ rhs
                if (sol < -1e-12).any() or (sol > 1 + 1e-12).any():
                    continue
                x = np.zeros(4)
                x[list(fixed)] = (v0, v1)
                x[free] = sol
                rule = EqOddsRule((x[0], x[2]), (x[1], x[3]))
                best = max(best, mixed_ba(rule, tpr, fpr, npos, nneg))
    return best


def test_eqodds_vertex_matches_grid_oracle():
    rng = np.random.default_rng(3)
    for _ in range(3):
        tpr = rng.uniform(0.2, 0.95, 2)
        fpr = np.minimum(rng.uniform(0.05, 0.6, 2), tpr - 0.05)
        yhat, y, a = rates_to_sample(tpr, fpr)
        tpr_x, fpr_x, npos, nneg = group_confusion_rates(yhat, y, a)
        rule = eqodds_fit(yhat, y, a)
        ours = mixed_ba(rule, tpr_x, fpr_x, npos, nneg)
        oracle = eqodds_grid_oracle(tpr_x, fpr_x, npos, nneg)
        assert ours == pytest.approx(oracle, abs=1e-6)


def test_eqodds_degenerate_group_error():
    with pytest.raises(GroupError):
        eqodds_fit([1, 0, 1], [1, 0, 1], [0, 0, 1])  # group 1 lacks negatives


def test_eqodds_apply_identity_and_flip():
    rng = np.random.default_rng(4)
    yhat = rng.integers(0, 2, 50).astype(float)
    a = rng.integers(0, 2, 50).astype(float)
    out = eqodds_apply(yhat, a, IDENTITY_RULE, np.random.default_rng(0))
    np.testing.assert_array_equal(out, yhat)
    flip = EqOddsRule((0.0, 0.0), (1.0, 1.0))
    out = eqodds_apply(yhat, a, flip, np.random.default_rng(0))
    np.testing.assert_array_equal(out, 1 - yhat)


def test_eqodds_apply_monte_carlo_matches_analytic():
    yhat, y, a = rates_to_sample([0.9, 0.55], [0.35, 0.1], per_cell=50)
    rule = eqodds_fit(yhat, y, a)
    tpr, fpr, _, _ = group_confusion_rates(yhat, y, a)
    reps = 2000  # 2000 x 200 rows = 4e5 draws per cell pair
    rng = np.random.default_rng(5)
    mixed = np.zeros_like(yhat)
    for _ in range(reps):
        mixed += eqodds_apply(yhat, a, rule, rng)
    mixed /= reps
    mtpr, mfpr = rule.mixed_rates(tpr, fpr)
    for g in (0, 1):
        grp = a == g
        emp_tpr = mixed[grp & (y == 1)].mean()
        emp_fpr = mixed[grp & (y == 0)].mean()
        assert emp_tpr == pytest.approx(mtpr[g], abs=0.01)
        assert emp_fpr == pytest.approx(mfpr[g], abs=0.01)


def test_eqodds_rule_serialization(tmp_path):
    rule = EqOddsRule((1.0, 0.5), (0.25, 0.0))
    save_rule(rule, tmp_path / "eq.json")
    assert load_rule(tmp_path / "eq.json") == rule


# ------------------------------------------------------------------ random perturbation

def test_random_perturb_zero_noise_returns_original():
    model = random_model(6, dropout=False)
    valid = random_batch(7, 40)
    model.threshold = select_threshold(model.forward(valid.features), valid.labels)
    out = random_perturb(model, valid, RandomPerturbConfig(trials=5, noise_sd=0.0, seed=1),
                         BiasSpec("spd"))
    np.testing.assert_array_equal(out.model.params, model.params)


def test_random_perturb_single_trial():
    model = random_model(8, dropout=False)
    valid = random_batch(9, 40)
    model.threshold = 0.5
    out = random_perturb(model, valid, RandomPerturbConfig(trials=1, noise_sd=0.1, seed=2),
                         BiasSpec("spd"))
    assert out.chosen_index == 0
    assert len(out.trajectory) == 1
    assert not np.array_equal(out.model.params, model.params)


def test_random_perturb_deterministic():
    model = random_model(10, dropout=False)
    valid = random_batch(11, 40)
    model.threshold = 0.5
    cfg = RandomPerturbConfig(trials=7, noise_sd=0.05, seed=3)
    out1 = random_perturb(model, valid, cfg, BiasSpec("spd"))
    out2 = random_perturb(model, valid, cfg, BiasSpec("spd"))
    assert out1.chosen_index == out2.chosen_index
    np.testing.assert_array_equal(out1.model.params, out2.model.params)


def test_random_perturb_selection_rule():
    model = random_model(12, dropout=False)
    valid = random_batch(13, 60)
    model.threshold = 0.5
    cfg = RandomPerturbConfig(trials=9, noise_sd=0.08, seed=4)
    out = random_perturb(model, valid, cfg, BiasSpec("spd"))
    bound = cfg.bias_bound + cfg.margin
    within = [r for r in out.trajectory if abs(r["bias"]) <= bound]
    chosen = out.trajectory[out.chosen_index]
    if within:
        assert out.feasible
        assert chosen["balanced_accuracy"] == max(r["balanced_accuracy"] for r in within)
    else:
        assert not out.feasible
        assert abs(chosen["bias"]) == min(abs(r["bias"]) for r in out.trajectory)
