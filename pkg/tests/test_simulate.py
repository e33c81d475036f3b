import math

import numpy as np
import pytest
from scipy import stats

from gevforest.simulate import (
    ScenarioSpec,
    halton_points,
    sample_scenario,
    scenario,
    true_block_max_quantile,
    true_quantile_y,
    _t_quantile,
)


class TestScenario:
    def test_scenario1_values(self):
        sp = scenario(1, 5)
        x = np.array([0.5, 0.0, 0.0, 0.0, 0.0])
        assert sp.gamma(x) == 2.0
        assert sp.nu(x) == pytest.approx(3.75)
        zero = np.zeros(5)
        assert sp.gamma(zero) == 1.0  # indicator is strict at x1 = 0
        assert sp.nu(zero) == 4.0

    def test_scenario2_values(self):
        sp = scenario(2, 3)
        zero = np.zeros(3)
        assert sp.gamma(zero) == pytest.approx(2.5)
        assert sp.nu(zero) == 4.0

    def test_scenario3_center_value(self):
        sp = scenario(3, 3)
        zero = np.zeros(3)
        # 1 + 2*pi*phi(0,0) = 1 + 1/sqrt(1 - rho^2)
        assert sp.gamma(zero) == pytest.approx(2.511857892036909, abs=1e-12)
        assert sp.nu(zero) == pytest.approx(3 + 7 / (1 + math.exp(1.2)))

    def test_validation(self):
        with pytest.raises(ValueError, match="unknown scenario"):
            scenario(4, 5)
        with pytest.raises(ValueError, match="p >= 3"):
            scenario(1, 2)

    @pytest.mark.parametrize("sid,g_lo,g_hi,n_lo,n_hi", [
        (1, 1.0, 2.0, 1.0, 6.0),
        (2, 2.0, 3.0, 1.0, 6.0),
        (3, 1.0, 3.0, 3.0, 10.0),
    ])
    def test_field_bounds_on_cube(self, sid, g_lo, g_hi, n_lo, n_hi):
        sp = scenario(sid, 4)
        X = np.random.default_rng(sid).uniform(-1, 1, (5000, 4))
        g = sp.gamma(X)
        n = sp.nu(X)
        assert np.all((g >= g_lo) & (g <= g_hi))
        assert np.all((n >= n_lo) & (n <= n_hi))
        assert np.all(n > 0) and np.all(g > 0)


class TestSampleScenario:
    def test_deterministic(self):
        sp = scenario(1, 4)
        a = sample_scenario(sp, 200, seed=5)
        b = sample_scenario(sp, 200, seed=5)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.response, b.response)
        c = sample_scenario(sp, 200, seed=6)
        assert not np.array_equal(a.response, c.response)

    def test_covariate_range(self):
        ds = sample_scenario(scenario(2, 6), 5000, seed=1)
        assert ds.features.min() >= -1.0 and ds.features.max() <= 1.0
        assert ds.feature_names == tuple(f"x{j+1}" for j in range(6))

    def test_empirical_quantile_matches_oracle(self):
        # scale the response at a nearly-fixed covariate cell and compare the
        # empirical 0.95 quantile with the exact oracle (binomial CI)
        sp = scenario(1, 3)
        n = 400_000
        ds = sample_scenario(sp, n, seed=77)
        x1 = ds.features[:, 0]
        cell = (x1 > 0.4) & (x1 < 0.6) & (np.abs(ds.features[:, 1]) < 0.1) \
            & (np.abs(ds.features[:, 2]) < 0.1)
        sub = ds.response[cell]
        assert sub.size > 400
        emp = np.quantile(sub, 0.95)
        centre = np.array([0.5, 0.0, 0.0])
        lo = true_quantile_y(sp, np.array([0.4, 0.1, 0.1]), 0.93)
        hi = true_quantile_y(sp, np.array([0.6, 0.0, 0.0]), 0.97)
        q = true_quantile_y(sp, centre, 0.95)
        assert lo < emp < hi
        assert abs(emp - q) / q < 0.25

    def test_uniformity_self_test(self):
        # normalized responses at a pinned covariate follow the t law:
        # a 1%-level KS test should pass in at least 95% of seeds
        sp = scenario(1, 3)
        x0 = np.array([0.5, -0.3, 0.2])
        df = sp.nu(x0)
        gamma = sp.gamma(x0)
        passes = 0
        n_seeds = 100
        for seed in range(n_seeds):
            rng = np.random.default_rng(seed)
            draws = rng.standard_normal(100_000) / np.sqrt(
                rng.chisquare(df, 100_000) / df
            )
            sample = gamma * draws / gamma
            p = stats.kstest(sample, stats.t(df).cdf).pvalue
            passes += p > 0.01
        assert passes >= 95

    def test_invalid_size(self):
        with pytest.raises(ValueError):
            sample_scenario(scenario(1, 3), 0, seed=1)


class TestHalton:
    def test_base2_prefix(self):
        pts = halton_points(3, 1)
        assert np.allclose(pts.ravel(), [0.0, -0.5, 0.5])

    def test_base3_second_dimension(self):
        pts = halton_points(4, 2)
        assert np.allclose(pts[:, 1], [-1 / 3, 1 / 3, -7 / 9, -1 / 9])

    def test_skip(self):
        assert np.allclose(halton_points(2, 2, skip=2), halton_points(4, 2)[2:])

    def test_deterministic_and_in_range(self):
        a = halton_points(500, 7)
        b = halton_points(500, 7)
        assert np.array_equal(a, b)
        assert np.all((a > -1) & (a < 1))

    def test_pairwise_distinct(self):
        pts = halton_points(300, 4)
        assert np.unique(pts, axis=0).shape[0] == 300

    def test_dimension_cap(self):
        with pytest.raises(ValueError):
            halton_points(5, 101)
        halton_points(2, 100)  # boundary allowed


class TestTrueQuantiles:
    def test_median_is_zero(self):
        sp = scenario(2, 3)
        for x in (np.zeros(3), np.array([0.3, -0.4, 0.9])):
            assert true_quantile_y(sp, x, 0.5) == 0.0

    def test_against_scipy(self):
        sp = scenario(1, 3)
        q = true_quantile_y(sp, np.zeros(3), 0.95)
        assert q == pytest.approx(2.131846786326649, abs=1e-9)
        for df, tau in ((3.7, 0.999), (2.2, 0.95), (9.9, 0.9999), (4.0, 0.2)):
            assert _t_quantile(tau, df) == pytest.approx(
                stats.t.ppf(tau, df), abs=1e-9
            )

    def test_scale_equivariance(self):
        # same nu on both sides of the scale jump: quantiles double exactly
        sp = scenario(1, 3)
        hi = true_quantile_y(sp, np.array([0.5, 0.1, -0.2]), 0.99)
        lo = true_quantile_y(sp, np.array([-0.5, 0.1, -0.2]), 0.99)
        assert hi == pytest.approx(2 * lo, rel=1e-10)

    def test_tau_validation(self):
        sp = scenario(1, 3)
        with pytest.raises(ValueError):
            true_quantile_y(sp, np.zeros(3), 1.0)


class TestTrueBlockMaxQuantile:
    def test_single_draw_reduction(self):
        sp = scenario(1, 3)
        x = np.array([0.2, 0.1, -0.5])
        assert true_block_max_quantile(sp, x, 0.9, 1) == true_quantile_y(sp, x, 0.9)

    def test_monotone_in_m(self):
        sp = scenario(1, 3)
        x = np.zeros(3)
        vals = [true_block_max_quantile(sp, x, 0.9, m) for m in (1, 2, 5, 20, 60)]
        assert np.all(np.diff(vals) > 0)

    def test_frozen_value_against_scipy(self):
        sp = scenario(1, 3)
        got = true_block_max_quantile(sp, np.zeros(3), 0.99, 40)
        assert got == pytest.approx(stats.t.ppf(0.99 ** (1 / 40), 4), abs=1e-8)
        assert got == pytest.approx(10.293255275637758, abs=1e-8)

    def test_monte_carlo_block_max(self):
        # brute-force oracle: empirical 0.99 quantile of maxima of 40 draws
        sp = scenario(1, 3)
        x = np.zeros(3)
        df = sp.nu(x)
        reps = 200_000
        rng = np.random.default_rng(9)
        draws = rng.standard_normal((reps, 40)) / np.sqrt(
            rng.chisquare(df, (reps, 40)) / df
        )
        emp = np.quantile(draws.max(axis=1), 0.99)
        exact = true_block_max_quantile(sp, x, 0.99, 40)
        # order-statistic CI: quantile of 2e5 samples at 0.99 is tight
        assert abs(emp - exact) / exact < 0.05

    def test_m_validation(self):
        with pytest.raises(ValueError):
            true_block_max_quantile(scenario(1, 3), np.zeros(3), 0.9, 0)
