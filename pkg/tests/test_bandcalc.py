import numpy as np
import pytest

from dqbands.bandcalc import (IQR_SCALE, AllPointsExcludedError,
                              EmptyBandError, critical_value, df_band_single,
                              df_bands_joint, empirical_quantile, invert_band,
                              minkowski_interval, minkowski_set, qe_band,
                              quantile_band_covers, ratio_band,
                              restrict_support, robust_se, test_equality)
from dqbands.core import (DFBand, Grid, MonotoneStepFn, ProbGrid, QEBand,
                          QuantileBand, left_inverse)

from oracles import critical_value_loop, order_statistic, pairwise_differences


def fn(vals, grid=None):
    return MonotoneStepFn(grid or Grid(np.arange(len(vals), dtype=float)), vals)


class TestRobustSE:
    def test_constant_draws(self):
        assert robust_se(np.full(50, 0.3)) == 0.0

    def test_order_statistic_convention(self):
        # 75th and 25th order statistics of {1..100}
        assert robust_se(np.arange(1, 101)) == pytest.approx(50 / 1.3489795003921634, abs=1e-12)
        assert robust_se(np.arange(1, 101)) == pytest.approx(37.06506, abs=1e-5)

    def test_iqr_constant(self):
        assert IQR_SCALE == pytest.approx(1.3489795003921634, abs=1e-15)

    def test_standard_normal(self):
        z = np.random.default_rng(0).standard_normal(100_000)
        assert abs(robust_se(z) - 1.0) < 0.02

    def test_needs_two_draws(self):
        with pytest.raises(ValueError):
            robust_se([1.0])


class TestCriticalValue:
    def test_ninth_order_statistic(self):
        assert empirical_quantile(np.arange(1, 11) / 10, 0.9) == pytest.approx(0.9)

    def test_symmetric_unit_draws(self):
        draws = np.array([1.0, -1.0] * 10)[:, None, None]
        for p in (0.5, 0.9, 0.99):
            rep = critical_value(draws, np.zeros((1, 1)), np.ones((1, 1)), p)
            assert rep.c == 1.0

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            B, K, T = rng.integers(5, 40), rng.integers(1, 4), rng.integers(1, 6)
            draws = rng.random((B, K, T))
            est = rng.random((K, T))
            se = rng.random((K, T)) * (rng.random((K, T)) > 0.2)
            if not np.any(se > 0):
                se[0, 0] = 0.5
            p = float(rng.uniform(0.05, 0.99))
            rep = critical_value(draws, est, se, p)
            assert rep.c == critical_value_loop(draws, est, se, p)

    def test_subset_never_larger(self):
        rng = np.random.default_rng(5)
        draws = rng.random((200, 3, 4))
        est = draws.mean(axis=0)
        se = robust_se(draws)
        full = critical_value(draws, est, se, 0.9).c
        part = critical_value(draws[:, :2], est[:2], se[:2], 0.9).c
        assert part <= full

    def test_all_excluded(self):
        with pytest.raises(AllPointsExcludedError):
            critical_value(np.ones((5, 1, 2)), np.ones((1, 2)), np.zeros((1, 2)), 0.9)

    def test_bad_level(self):
        with pytest.raises(ValueError):
            critical_value(np.ones((5, 1, 1)), np.ones((1, 1)), np.ones((1, 1)), 1.0)


class TestDFBands:
    def setup_method(self):
        rng = np.random.default_rng(6)
        self.grid = Grid(np.arange(5.0))
        self.est = np.array([[0.1, 0.3, 0.6, 0.9, 1.0], [0.2, 0.4, 0.5, 0.8, 1.0]])
        self.draws = np.clip(self.est + 0.05 * rng.standard_normal((300, 2, 5)), 0, 1)
        self.draws[:, :, -1] = 1.0
        self.draws = np.sort(self.draws, axis=-1)

    def test_zero_critical_value_collapses(self):
        draws = np.repeat(self.est[None], 10, axis=0)
        draws[0, 0, 0] += 1e-3  # one varying point keeps the statistic defined
        draws[1:5, 0, 0] -= 1e-3
        jb = df_bands_joint(self.est, draws, 0.5, self.grid)
        for k, band in enumerate(jb.bands):
            if k == 1:
                np.testing.assert_array_equal(band.lower.values, self.est[1])
                np.testing.assert_array_equal(band.upper.values, self.est[1])

    def test_excluded_points_get_zero_width(self):
        jb = df_bands_joint(self.est, self.draws, 0.95, self.grid)
        assert jb.report.excluded[:, -1].all()
        for band in jb.bands:
            assert band.lower.values[-1] == band.upper.values[-1] == 1.0

    def test_shaping_never_widens(self):
        jb = df_bands_joint(self.est, self.draws, 0.95, self.grid)
        for k, band in enumerate(jb.bands):
            assert band.width() <= np.max(jb.prelim_upper[k] - jb.prelim_lower[k]) + 1e-15

    def test_single_equals_joint_with_one_function(self):
        a = df_band_single(self.est[0], self.draws[:, 0, :], 0.9, self.grid)
        b = df_bands_joint(self.est[:1], self.draws[:, :1, :], 0.9, self.grid)
        assert a.report.c == b.report.c
        np.testing.assert_array_equal(a.bands[0].lower.values, b.bands[0].lower.values)

    def test_single_critical_value_below_joint(self):
        joint = df_bands_joint(self.est, self.draws, 0.9, self.grid).report.c
        for k in range(2):
            single = df_band_single(self.est[k], self.draws[:, k, :], 0.9, self.grid).report.c
            assert single <= joint

    @pytest.mark.parametrize("method", ["rearrange", "isotonize", "mix", "intersect"])
    def test_methods_return_members(self, method):
        jb = df_bands_joint(self.est, self.draws, 0.9, self.grid, method=method,
                            iso_weight=0.3)
        for band, est in zip(jb.bands, jb.estimates):
            assert np.all(band.lower.values <= band.upper.values)

    def test_intersect_empty_raises(self):
        est = np.array([[0.6, 0.4, 0.7]])
        draws = est + np.linspace(-1e-3, 1e-3, 20)[:, None, None]
        with pytest.raises(EmptyBandError):
            df_bands_joint(est, draws, 0.5, Grid([0, 1, 2.0]), method="intersect")

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            df_bands_joint(self.est, self.draws, 0.9, self.grid, method="smooth")


class TestInversion:
    def test_worked_example(self):
        F = np.array([0.4, 0.7, 1.0])
        band = DFBand(fn(np.maximum(0, F - 0.1)), fn(np.minimum(1, F + 0.1)), 0.9)
        qb = invert_band(band, ProbGrid([0.5]), augment=False)
        assert (qb.lo[0], qb.hi[0]) == (0.0, 1.0)

    def test_degenerate_band_gives_quantile_function(self):
        F = fn([0.4, 0.7, 1.0])
        qb = invert_band(DFBand(F, F, 0.9), ProbGrid.default())
        np.testing.assert_array_equal(qb.lo, qb.hi)
        np.testing.assert_array_equal(qb.lo, left_inverse(F, qb.prob_grid.indices))

    def test_lowering_lower_edge_raises_upper_quantile(self):
        U = fn([0.6, 0.9, 1.0])
        L1, L2 = fn([0.3, 0.5, 1.0]), fn([0.1, 0.4, 1.0])
        pg = ProbGrid.default()
        q1 = invert_band(DFBand(L1, U, 0.9), pg, augment=False)
        q2 = invert_band(DFBand(L2, U, 0.9), pg, augment=False)
        assert np.all(q2.hi >= q1.hi)

    def test_augmented_grid_contains_jump_levels(self):
        band = DFBand(fn([0.123, 0.5, 1.0]), fn([0.3, 0.77, 1.0]), 0.9)
        qb = invert_band(band)
        assert {0.123, 0.3, 0.5, 0.77} <= set(qb.prob_grid.indices)


class TestSupport:
    def qb(self, lo, hi):
        return QuantileBand(ProbGrid([0.5]), [lo], [hi])

    def test_tightens(self):
        r = restrict_support(self.qb(0.3, 2.7), [0, 1, 2, 3])
        assert (r.lo[0], r.hi[0]) == (1, 2)
        np.testing.assert_array_equal(r.admissible[0], [1, 2])

    def test_unchanged_on_integer_ends(self):
        r = restrict_support(self.qb(1, 3), np.arange(10))
        assert (r.lo[0], r.hi[0]) == (1, 3)

    def test_empty_flagged(self):
        r = restrict_support(self.qb(0.2, 0.8), np.arange(5))
        assert r.empty[0] and (r.lo[0], r.hi[0]) == (0.2, 0.8)

    def test_empty_support_rejected(self):
        with pytest.raises(ValueError):
            restrict_support(self.qb(0, 1), [])


class TestQE:
    def pair(self, a, b, sa=None, sb=None):
        pg = ProbGrid([0.5])
        return (QuantileBand(pg, [a[0]], [a[1]], None if sa is None else (sa,)),
                QuantileBand(pg, [b[0]], [b[1]], None if sb is None else (sb,)))

    def test_interval_rule(self):
        qe = qe_band(*self.pair((1, 3), (0, 2)))
        assert (qe.lo[0], qe.hi[0]) == (-1, 3)

    def test_point_bands(self):
        qe = qe_band(*self.pair((2, 2), (2, 2)))
        assert (qe.lo[0], qe.hi[0]) == (0, 0)

    def test_admissible_differences(self):
        qe = qe_band(*self.pair((0, 2), (0, 1), [0, 2], [0, 1]))
        np.testing.assert_array_equal(qe.admissible[0], [-1, 0, 1, 2])

    def test_joint_support_filter(self):
        qe = qe_band(*self.pair((0, 2), (0, 1), [0, 2], [0, 1]),
                     joint_support=lambda v, u: not (v == 2 and u == 0))
        np.testing.assert_array_equal(qe.admissible[0], [-1, 0, 1])
        assert qe.hi[0] == 1

    def test_prob_grid_mismatch(self):
        a = QuantileBand(ProbGrid([0.5]), [0], [1])
        b = QuantileBand(ProbGrid([0.6]), [0], [1])
        with pytest.raises(ValueError):
            qe_band(a, b)

    def test_minkowski_set_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            vs = np.unique(rng.integers(-3, 4, rng.integers(1, 5)))
            us = np.unique(rng.integers(-3, 4, rng.integers(1, 5)))
            assert tuple(minkowski_set(vs, us)) == pairwise_differences(vs, us)

    def test_minkowski_interval(self):
        assert minkowski_interval(1, 3, 0, 2) == (-1, 3)


class TestRatio:
    def one(self, lo, hi):
        return QuantileBand(ProbGrid([0.5]), [lo], [hi])

    def test_rule(self):
        r = ratio_band(self.one(2, 4), self.one(1, 2))
        assert (r.lo[0], r.hi[0]) == (1, 4) and r.kind == "ratio"

    def test_points(self):
        r = ratio_band(self.one(3, 3), self.one(3, 3))
        assert (r.lo[0], r.hi[0]) == (1, 1)

    def test_nonpositive_denominator(self):
        with pytest.raises(ValueError, match="index 0"):
            ratio_band(self.one(2, 4), self.one(0, 1))


class TestEquality:
    def qe(self, lo, hi, adm=None):
        return QEBand(ProbGrid(np.linspace(0.1, 0.9, len(lo))), lo, hi, adm)

    def test_all_contain_zero(self):
        assert not test_equality(self.qe([-1, 0, -0.5], [1, 0, 0.5])).reject

    def test_excluding_interval(self):
        t = test_equality(self.qe([-1, 0.5, -0.5], [1, 1.2, 0.5]))
        assert t.reject and list(t.indices) == [1]

    def test_admissible_set_without_zero(self):
        qe = self.qe([-1, -1], [1, 1], ([-1, 0, 1], [-1, 1]))
        t = test_equality(qe)
        assert t.reject and list(t.indices) == [1]
        assert not test_equality(qe, use_support=False).reject

    def test_empty_admissible_is_conservative(self):
        qe = self.qe([-1, -1], [1, 1], (np.array([]), [0]))
        t = test_equality(qe)
        assert not t.reject and list(t.empty_admissible) == [0]


def test_quantile_band_covers_uses_admissible_sets():
    qb = QuantileBand(ProbGrid([0.5]), [0], [2], ([0, 2],))
    assert quantile_band_covers(qb, [2])
    assert not quantile_band_covers(qb, [1])
    assert quantile_band_covers(qb, [1], use_support=False)


def test_order_statistic_oracle_agrees():
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = rng.random(rng.integers(2, 60))
        p = float(rng.random())
        assert empirical_quantile(x, p) == order_statistic(x, p)
