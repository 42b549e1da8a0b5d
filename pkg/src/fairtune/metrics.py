"""Group-parity metrics, balanced accuracy, and their differentiable score-based proxies.

Conventions: the protected attribute ``a`` and labels ``y`` are 0/1 vectors.
All differences are taken as "group a=0 minus group a=1", so a negative value
means the classifier favours group a=1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GroupError(ValueError):
    """A group required by a metric is empty or degenerate."""


def _as_vec(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("empty input vector")
    return v


def spd(yhat, a) -> float:
    """Statistical parity difference of hard predictions.

    P(yhat=1 | a=0) - P(yhat=1 | a=1), estimated by group frequencies.
    """
    yhat, a = _as_vec(yhat), _as_vec(a)
    if yhat.shape != a.shape:
        raise ValueError("yhat and a must have equal length")
    g0, g1 = a == 0, a == 1
    if not g0.any():
        raise GroupError("protected group a=0 is empty")
    if not g1.any():
        raise GroupError("protected group a=1 is empty")
    return float(yhat[g0].mean() - yhat[g1].mean())


def eod(yhat, y, a) -> float:
    """Equal opportunity difference: TPR(a=0) - TPR(a=1)."""
    yhat, y, a = _as_vec(yhat), _as_vec(y), _as_vec(a)
    pos = y == 1
    g0, g1 = pos & (a == 0), pos & (a == 1)
    if not g0.any():
        raise GroupError("no positive rows in group a=0")
    if not g1.any():
        raise GroupError("no positive rows in group a=1")
    return float(yhat[g0].mean() - yhat[g1].mean())


def balanced_accuracy(yhat, y) -> float:
    """(TPR + TNR) / 2; requires both classes present in y."""
    yhat, y = _as_vec(yhat), _as_vec(y)
    pos, neg = y == 1, y == 0
    if not pos.any() or not neg.any():
        raise GroupError("degenerate labels: both classes required")
    tpr = yhat[pos].mean()
    tnr = 1.0 - yhat[neg].mean()
    return float(0.5 * (tpr + tnr))


def proxy_spd(scores, a) -> float:
    """Differentiable statistical-parity proxy: difference of group mean scores."""
    scores, a = _as_vec(scores), _as_vec(a)
    g0, g1 = a == 0, a == 1
    if not g0.any():
        raise GroupError("protected group a=0 is empty")
    if not g1.any():
        raise GroupError("protected group a=1 is empty")
    return float(scores[g0].mean() - scores[g1].mean())


def proxy_eod(scores, y, a) -> float:
    """Differentiable equal-opportunity proxy: group mean-score difference on y=1 rows."""
    scores, y, a = _as_vec(scores), _as_vec(y), _as_vec(a)
    pos = y == 1
    g0, g1 = pos & (a == 0), pos & (a == 1)
    if not g0.any():
        raise GroupError("no positive rows in group a=0")
    if not g1.any():
        raise GroupError("no positive rows in group a=1")
    return float(scores[g0].mean() - scores[g1].mean())


def cov_hat(a, scores) -> float:
    """Plug-in covariance estimate between the attribute and the raw scores.

    Computed as (1/N) sum(f_i a_i) - (K/N^2) sum(f_i) with K = sum(a_i).
    """
    a, scores = _as_vec(a), _as_vec(scores)
    n = a.size
    k = float(a.sum())
    return float((scores * a).sum() / n - k * scores.sum() / (n * n))


def cov_hat_conditional(a, scores, y) -> float:
    """Covariance estimate between attribute and scores restricted to y=1 rows."""
    a, scores, y = _as_vec(a), _as_vec(scores), _as_vec(y)
    m = float(y.sum())
    if m == 0:
        raise GroupError("no positive rows")
    r = float((a * y).sum())
    return float((scores * a * y).sum() / m - r * (scores * y).sum() / (m * m))


@dataclass(frozen=True)
class GroupCounts:
    """Sample counts behind the proxy/covariance proportionality factors."""

    N: int
    K: int
    M: int
    R: int

    @classmethod
    def from_arrays(cls, a, y=None) -> "GroupCounts":
        a = _as_vec(a)
        n = int(a.size)
        k = int(a.sum())
        if y is None:
            return cls(N=n, K=k, M=0, R=0)
        y = _as_vec(y)
        return cls(N=n, K=k, M=int(y.sum()), R=int((a * y).sum()))


@dataclass(frozen=True)
class IdentityReport:
    """Result of checking one proxy/covariance proportionality identity."""

    lhs: float
    rhs: float
    factor: float
    residual: float
    passed: bool


_IDENTITY_TOL = 1e-10


def verify_spd_cov_identity(a, scores) -> IdentityReport:
    """Check that -proxy_spd equals cov_hat up to the factor N^2 / (K (N-K)).

    The report's lhs is -proxy_spd scaled down by the factor, rhs is cov_hat,
    and the check passes when |lhs - rhs| <= 1e-10.
    """
    a, scores = _as_vec(a), _as_vec(scores)
    c = GroupCounts.from_arrays(a)
    if c.K == 0 or c.K == c.N:
        raise GroupError("both protected groups must be non-empty")
    factor = c.N**2 / (c.K * (c.N - c.K))
    lhs = -proxy_spd(scores, a) / factor
    rhs = cov_hat(a, scores)
    residual = abs(lhs - rhs)
    return IdentityReport(lhs, rhs, factor, residual, residual <= _IDENTITY_TOL)


def verify_eod_cov_identity(a, scores, y) -> IdentityReport:
    """Check that -proxy_eod equals cov_hat_conditional up to M^2 / (R (M-R))."""
    a, scores, y = _as_vec(a), _as_vec(scores), _as_vec(y)
    c = GroupCounts.from_arrays(a, y)
    if c.M == 0:
        raise GroupError("no positive rows")
    if c.R == 0 or c.R == c.M:
        raise GroupError("all positive rows fall in one protected group")
    factor = c.M**2 / (c.R * (c.M - c.R))
    lhs = -proxy_eod(scores, y, a) / factor
    rhs = cov_hat_conditional(a, scores, y)
    residual = abs(lhs - rhs)
    return IdentityReport(lhs, rhs, factor, residual, residual <= _IDENTITY_TOL)


@dataclass(frozen=True)
class BiasSpec:
    """Selects the targeted parity measure and its differentiable proxy."""

    measure: str  # "spd" or "eod"

    def __post_init__(self):
        if self.measure not in ("spd", "eod"):
            raise ValueError(f"unknown bias measure: {self.measure!r}")

    def bias(self, yhat, y, a) -> float:
        if self.measure == "spd":
            return spd(yhat, a)
        return eod(yhat, y, a)

    def proxy(self, scores, y, a) -> float:
        if self.measure == "spd":
            return proxy_spd(scores, a)
        return proxy_eod(scores, y, a)

    def proxy_score_weights(self, y, a) -> np.ndarray:
        """Gradient of the proxy with respect to each raw score.

        Entry i is +1/n0 for rows counted in the a=0 group mean and -1/n1 for
        the a=1 group (restricted to y=1 rows for the eod measure).
        Raises GroupError when a required group is empty.
        """
        y, a = _as_vec(y), _as_vec(a)
        w = np.zeros(a.size)
        if self.measure == "spd":
            g0, g1 = a == 0, a == 1
        else:
            pos = y == 1
            g0, g1 = pos & (a == 0), pos & (a == 1)
        n0, n1 = int(g0.sum()), int(g1.sum())
        if n0 == 0 or n1 == 0:
            which = "a=0" if n0 == 0 else "a=1"
            prefix = "" if self.measure == "spd" else "positive rows of "
            raise GroupError(f"{prefix}group {which} is empty")
        w[g0] = 1.0 / n0
        w[g1] = -1.0 / n1
        return w
