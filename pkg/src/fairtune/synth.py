"""Synthetic benchmark generators with a tunable label/attribute correlation.

Two families are provided. The logit-model family ("loh") draws ten tabular
features with mixed marginals and a label whose log-odds contain an attribute
interaction scaled by alpha. The rotated-Gaussian family ("zafar") draws a
balanced label, class-conditional 2-d Gaussians, assigns the attribute from
the class-density ratio at a rotated copy of the point, and embeds the
unrotated point into p dimensions through a random two-hidden-layer relu map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset


@dataclass(frozen=True)
class LohConfig:
    n: int
    alpha: float
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")


@dataclass(frozen=True)
class ZafarConfig:
    n: int
    theta: float
    embed_hidden: int = 16
    embed_out: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.embed_hidden < 1 or self.embed_out < 1:
            raise ValueError("embedding widths must be positive")


def gen_loh(cfg: LohConfig) -> Dataset:
    """Ten-feature logit-model dataset.

    Marginals: x1, x2, x3, x7..x10 standard normal with corr(x2, x3) = 0.5 and
    pairwise correlation 0.5 within the x7..x10 block (both via Cholesky
    constructions), x4 ~ Exp(1), x5 ~ Bernoulli(1/2), x6 uniform over the
    categories {0, ..., 9}. The attribute is an independent fair coin and the
    label is Bernoulli(sigmoid(0.5 (x1 + x2 - x5) + 2 alpha a 1{x6 odd})).
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    x1 = rng.standard_normal(n)
    z2 = rng.standard_normal(n)
    z3 = rng.standard_normal(n)
    x2 = z2
    x3 = 0.5 * z2 + np.sqrt(0.75) * z3
    x4 = rng.exponential(1.0, n)
    x5 = rng.integers(0, 2, n).astype(np.float64)
    x6 = rng.integers(0, 10, n).astype(np.float64)
    # equicorrelated block: sqrt(rho) shared factor + sqrt(1-rho) idiosyncratic
    shared = rng.standard_normal(n)
    block = np.sqrt(0.5) * shared[:, None] + np.sqrt(0.5) * rng.standard_normal((n, 4))
    a = rng.integers(0, 2, n).astype(np.float64)
    logit = 0.5 * (x1 + x2 - x5) + 2.0 * cfg.alpha * a * (x6 % 2 == 1)
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(np.float64)
    features = np.column_stack([x1, x2, x3, x4, x5, x6, block])
    names = [f"x{i}" for i in range(1, 11)]
    return Dataset(features, y, a, names)


ZAFAR_MEAN0 = np.array([-2.0, -2.0])
ZAFAR_COV0 = np.array([[10.0, 1.0], [1.0, 3.0]])
ZAFAR_MEAN1 = np.array([2.0, 2.0])
ZAFAR_COV1 = np.array([[5.0, 1.0], [1.0, 5.0]])


def bivariate_normal_pdf(points: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Density of N(mean, cov) at each row of points."""
    d = np.atleast_2d(points) - mean
    icov = np.linalg.inv(cov)
    det = np.linalg.det(cov)
    expo = -0.5 * np.einsum("ij,jk,ik->i", d, icov, d)
    return np.exp(expo) / (2.0 * np.pi * np.sqrt(det))


def attribute_posterior(points: np.ndarray) -> np.ndarray:
    """P(a=1) at each point: the class-1 density share of the two class
    conditionals."""
    p1 = bivariate_normal_pdf(points, ZAFAR_MEAN1, ZAFAR_COV1)
    p0 = bivariate_normal_pdf(points, ZAFAR_MEAN0, ZAFAR_COV0)
    return p1 / (p1 + p0)


def gen_zafar(cfg: ZafarConfig) -> Dataset:
    """Rotated-Gaussian dataset with a random nonlinear feature embedding.

    The attribute is drawn from the class-density ratio evaluated at the
    rotated point; the features are the embedding of the unrotated point, so
    theta controls only how much the attribute correlates with the label.
    The rotation matrix acts on row vectors, under which angles closer to
    zero yield a stronger label/attribute correlation.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    y = rng.integers(0, 2, n).astype(np.float64)
    L0 = np.linalg.cholesky(ZAFAR_COV0)
    L1 = np.linalg.cholesky(ZAFAR_COV1)
    z = rng.standard_normal((n, 2))
    base = np.where((y == 1)[:, None], ZAFAR_MEAN1 + z @ L1.T, ZAFAR_MEAN0 + z @ L0.T)
    c, s = np.cos(cfg.theta), np.sin(cfg.theta)
    rotation = np.array([[c, -s], [s, c]])
    rotated = base @ rotation
    a = (rng.random(n) < attribute_posterior(rotated)).astype(np.float64)
    h, p = cfg.embed_hidden, cfg.embed_out
    w0 = rng.normal(0.0, 1.0 / np.sqrt(2.0), (h, 2))
    b0 = rng.normal(0.0, 0.1, h)
    w1 = rng.normal(0.0, 1.0 / np.sqrt(h), (h, h))
    b1 = rng.normal(0.0, 0.1, h)
    w2 = rng.normal(0.0, 1.0 / np.sqrt(h), (p, h))
    b2 = rng.normal(0.0, 0.1, p)
    h1 = np.maximum(base @ w0.T + b0, 0.0)
    h2 = np.maximum(h1 @ w1.T + b1, 0.0)
    features = h2 @ w2.T + b2
    return Dataset(features, y, a, [f"x{i}" for i in range(1, p + 1)])
