import math

import numpy as np
import pytest
from scipy import stats as sps

from weldlab.stats import (
    ess,
    ks_2samp,
    ks_test,
    mean_se,
    strictly_decreasing,
    trend_test,
    weighted_ecdf,
    weighted_ks,
    weighted_mean_se,
    within_ci,
)


def test_ks_null_p_values_roughly_uniform():
    gen = np.random.default_rng(0)
    ps = np.array([ks_test(gen.standard_normal(200), sps.norm.cdf).p for _ in range(300)])
    # the p-values themselves should pass a uniformity check
    assert ks_test(ps, sps.uniform.cdf).p > 1e-3
    assert 0 <= ps.min() and ps.max() <= 1


def test_ks_detects_shift():
    x = np.random.default_rng(1).normal(0.5, 1.0, 500)
    r = ks_test(x, sps.norm.cdf)
    assert r.p < 1e-6 and 0 < r.D <= 1


def test_ks_rejects_small_or_nonfinite():
    with pytest.raises(ValueError):
        ks_test(np.zeros(5), sps.norm.cdf)
    with pytest.raises(ValueError):
        ks_test(np.r_[np.zeros(30), np.nan], sps.norm.cdf)


def test_two_sample_same_law():
    gen = np.random.default_rng(2)
    r = ks_2samp(gen.exponential(size=400), gen.exponential(size=300))
    assert r.n == pytest.approx(400 * 300 / 700)
    assert r.p > 1e-3
    D, p = r
    assert (D, p) == (r.D, r.p)


def test_ess_bounds():
    assert ess(np.ones(50)) == pytest.approx(50)
    assert ess(np.r_[1.0, np.zeros(9)]) == pytest.approx(1)
    assert ess(np.zeros(3)) == 0.0


def test_weighted_ks_unit_weights_matches_plain():
    x = np.random.default_rng(3).standard_normal(300)
    a, b = weighted_ks(x, np.ones_like(x), sps.norm.cdf), ks_test(x, sps.norm.cdf)
    assert a.D == pytest.approx(b.D, abs=1e-12)
    assert a.n == pytest.approx(300)


def test_weighted_ks_importance_sampling():
    # samples from N(0,1) reweighted to N(1,1) by the likelihood ratio
    gen = np.random.default_rng(4)
    x = gen.standard_normal(20_000)
    w = np.exp(x - 0.5)
    good = weighted_ks(x, w, lambda t: sps.norm.cdf(t, loc=1.0))
    bad = weighted_ks(x, w, sps.norm.cdf)
    assert good.p > 1e-3 and bad.p < 1e-10
    assert good.n < x.size


def test_weighted_ks_validation():
    x = np.arange(30.0)
    with pytest.raises(ValueError):
        weighted_ks(x, -np.ones(30), sps.norm.cdf)
    with pytest.raises(ValueError):
        weighted_ks(x, np.ones(29), sps.norm.cdf)


def test_weighted_ecdf_ends_at_one():
    xs, F = weighted_ecdf([3.0, 1.0, 2.0], [1.0, 2.0, 1.0])
    assert xs.tolist() == [1.0, 2.0, 3.0]
    assert np.allclose(F, [0.5, 0.75, 1.0])


def test_means_and_ci():
    m, se = mean_se([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5 and se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    wm, wse = weighted_mean_se([0.0, 10.0], [3.0, 1.0])
    assert wm == pytest.approx(2.5) and wse > 0
    assert within_ci(1.2, 1.0, 0.1, k=3) and not within_ci(1.5, 1.0, 0.1, k=3)


def test_trend_examples():
    assert trend_test([3.0, 2.0, 1.0]) == (pytest.approx(-1.0), 1.0)
    slope, frac = trend_test([1.0, 1.0, 1.0, 1.0])
    assert slope == 0.0 and frac == 0.0
    slope, _ = trend_test([4.0, 1.0, 0.25], ladder=[0.0, 1.0, 2.0])
    assert slope < 0
    with pytest.raises(ValueError):
        trend_test([1.0, 0.5])


def test_strictly_decreasing():
    assert strictly_decreasing([3, 2, 1])
    assert not strictly_decreasing([3, 3, 1])
    assert not strictly_decreasing([1, 2])
    assert math.isfinite(trend_test([0.1, 0.05, 0.07])[0])
