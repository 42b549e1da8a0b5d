import numpy as np
import pytest
from scipy.stats import multivariate_normal

from fairtune.synth import (LohConfig, ZAFAR_COV0, ZAFAR_COV1, ZAFAR_MEAN0, ZAFAR_MEAN1,
                            ZafarConfig, attribute_posterior, bivariate_normal_pdf,
                            gen_loh, gen_zafar)

BIG_N = 100_000


@pytest.fixture(scope="module")
def loh_big():
    return gen_loh(LohConfig(BIG_N, 1.0, seed=99))


def test_loh_deterministic():
    cfg = LohConfig(500, 1.2, seed=3)
    d1, d2 = gen_loh(cfg), gen_loh(cfg)
    np.testing.assert_array_equal(d1.features, d2.features)
    np.testing.assert_array_equal(d1.labels, d2.labels)
    np.testing.assert_array_equal(d1.protected, d2.protected)


def test_loh_config_validation():
    with pytest.raises(ValueError):
        LohConfig(0, 1.0)
    with pytest.raises(ValueError):
        LohConfig(10, -0.5)


def test_loh_marginals(loh_big):
    X = loh_big.features
    assert 0.49 <= loh_big.protected.mean() <= 0.51
    assert abs(X[:, 0].mean()) <= 0.02 and abs(X[:, 0].std() - 1.0) <= 0.02
    assert 0.98 <= X[:, 3].mean() <= 1.02          # Exp(1)
    assert 0.49 <= X[:, 4].mean() <= 0.51          # Bernoulli(1/2)
    counts = np.bincount(X[:, 5].astype(int), minlength=10) / BIG_N
    assert counts.size == 10 and np.all((0.09 <= counts) & (counts <= 0.11))


def test_loh_correlation_targets(loh_big):
    X = loh_big.features
    assert abs(np.corrcoef(X[:, 1], X[:, 2])[0, 1] - 0.5) <= 0.02
    for j in range(6, 10):
        for k in range(j + 1, 10):
            assert abs(np.corrcoef(X[:, j], X[:, k])[0, 1] - 0.5) <= 0.02


def test_loh_alpha_zero_uncorrelated():
    d = gen_loh(LohConfig(BIG_N, 0.0, seed=5))
    assert abs(np.corrcoef(d.labels, d.protected)[0, 1]) <= 0.01


def test_loh_alpha_monotone_correlation():
    weak = gen_loh(LohConfig(BIG_N, 0.5, seed=6))
    strong = gen_loh(LohConfig(BIG_N, 2.5, seed=6))
    c_weak = np.corrcoef(weak.labels, weak.protected)[0, 1]
    c_strong = np.corrcoef(strong.labels, strong.protected)[0, 1]
    assert c_strong > c_weak > 0


def test_zafar_deterministic():
    cfg = ZafarConfig(400, 1.0, seed=8)
    d1, d2 = gen_zafar(cfg), gen_zafar(cfg)
    np.testing.assert_array_equal(d1.features, d2.features)
    np.testing.assert_array_equal(d1.protected, d2.protected)


def test_zafar_label_balance():
    d = gen_zafar(ZafarConfig(BIG_N, 1.2, seed=9))
    assert abs(d.labels.mean() - 0.5) <= 0.01


def test_zafar_feature_dimensions():
    d = gen_zafar(ZafarConfig(50, 0.9, embed_hidden=8, embed_out=13, seed=1))
    assert d.features.shape == (50, 13)


def test_density_matches_scipy_oracle():
    probes = np.array([[0.0, 0.0], [1.5, -2.0], [-3.0, 4.0], [2.0, 2.0]])
    for mean, cov in ((ZAFAR_MEAN0, ZAFAR_COV0), (ZAFAR_MEAN1, ZAFAR_COV1)):
        expected = multivariate_normal(mean, cov).pdf(probes)
        np.testing.assert_allclose(bivariate_normal_pdf(probes, mean, cov),
                                   expected, rtol=1e-12)


def test_attribute_posterior_oracle_and_midpoint():
    probes = np.array([[0.3, -0.8], [2.0, 2.0], [-2.0, -2.0]])
    p1 = multivariate_normal(ZAFAR_MEAN1, ZAFAR_COV1).pdf(probes)
    p0 = multivariate_normal(ZAFAR_MEAN0, ZAFAR_COV0).pdf(probes)
    np.testing.assert_allclose(attribute_posterior(probes), p1 / (p1 + p0), rtol=1e-12)
    # bisect along the segment between the class means for the equal-density point
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        point = (1 - mid) * ZAFAR_MEAN0 + mid * ZAFAR_MEAN1
        if attribute_posterior(point[None, :])[0] < 0.5:
            lo = mid
        else:
            hi = mid
    point = (1 - 0.5 * (lo + hi)) * ZAFAR_MEAN0 + 0.5 * (lo + hi) * ZAFAR_MEAN1
    assert attribute_posterior(point[None, :])[0] == pytest.approx(0.5, abs=1e-9)


def test_zafar_theta_ordering():
    tight = gen_zafar(ZafarConfig(BIG_N, 0.7, seed=10))
    loose = gen_zafar(ZafarConfig(BIG_N, 1.2, seed=10))
    c_tight = abs(np.corrcoef(tight.labels, tight.protected)[0, 1])
    c_loose = abs(np.corrcoef(loose.labels, loose.protected)[0, 1])
    assert c_tight > c_loose
