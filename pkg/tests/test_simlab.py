import math

import numpy as np
import pytest
from scipy import stats

from dqbands.resample import BootstrapConfig, weight_matrix
from dqbands.simlab import (DEFAULT_CUTOFFS, ORDERED_MASSES, SimDesign,
                            aggregate, competitor_constant_width,
                            competitor_jitter, design_grid,
                            direct_supt_diagnostic, gen_ordered, gen_poisson,
                            ordered_masses, population_dfs, relevant_points,
                            run_design, run_replication, weighted_quantiles)

from oracles import poisson_cdf_recurrence


class TestDesigns:
    def test_default_cutoffs(self):
        np.testing.assert_allclose(DEFAULT_CUTOFFS,
                                   [-1.28155, -0.64335, 0.0, 0.64335, 1.28155], atol=1e-5)

    def test_ordered_masses_at_zero(self):
        np.testing.assert_allclose(ordered_masses(0.0, DEFAULT_CUTOFFS), ORDERED_MASSES,
                                   atol=1e-12)

    def test_ordered_masses_shift(self):
        c = np.array(DEFAULT_CUTOFFS)
        cdf = np.append(stats.norm.cdf(c - 0.4), 1.0)
        np.testing.assert_allclose(ordered_masses(0.4, c), np.diff(cdf, prepend=0.0),
                                   atol=1e-15)
        assert ordered_masses(0.4, c)[-1] > 0.1

    def test_poisson_population(self):
        d = SimDesign(params=(3.0, 3.0))
        grid = design_grid(d)
        F = population_dfs(d, grid)[0]
        assert F.values[2] == pytest.approx(0.42319, abs=1e-5)
        assert F.values[2] == pytest.approx(poisson_cdf_recurrence(3.0, 2), abs=1e-14)

    def test_count_grid(self):
        grid = design_grid(SimDesign(params=(3.0, 2.5)))
        np.testing.assert_array_equal(grid.points, np.arange(8.0))
        assert grid.domain_sup == np.inf
        grid = design_grid(SimDesign(params=(3.0, 3.0), grid_mass=0.999))
        assert grid.points[-1] == 10  # P(Y <= 9) = 0.99890 < 0.999

    def test_ordered_grid(self):
        grid = design_grid(SimDesign("ordered", (0.0, 0.2)))
        np.testing.assert_array_equal(grid.points, np.arange(6.0))

    def test_relevant_points(self):
        d = SimDesign(params=(3.0, 3.0))
        grid = design_grid(d)
        mask = relevant_points(d, grid, population_dfs(d, grid))
        # Poisson(3): 0.1-quantile is 1, 0.9-quantile is 5
        np.testing.assert_array_equal(grid.points[mask], [1, 2, 3, 4, 5])

    @pytest.mark.parametrize("kwargs", [dict(params=(0.0, 3.0)), dict(params=(3.0, -1.0)),
                                        dict(prob_range=(0.0, 0.9)), dict(p=1.0),
                                        dict(family="binomial"), dict(B=1),
                                        dict(cutoffs=(0.0, -1.0))])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SimDesign(**kwargs)


class TestGenerators:
    def test_ordered_frequencies(self):
        y = gen_ordered(0.0, DEFAULT_CUTOFFS, 200_000, np.random.default_rng(0))
        freq = np.bincount(y.astype(int), minlength=6) / y.size
        np.testing.assert_allclose(freq, ORDERED_MASSES, atol=0.004)

    def test_poisson_mean(self):
        y = gen_poisson(3.0, 100_000, np.random.default_rng(1))
        assert abs(y.mean() - 3.0) < 0.03 and np.all(y == np.floor(y))


class TestCompetitors:
    def setup_method(self):
        rng = np.random.default_rng(2)
        self.y0 = rng.poisson(3, 200).astype(float)
        self.y1 = rng.poisson(3, 200).astype(float)
        W = weight_matrix(BootstrapConfig(draws=100, master_seed=9), 400)
        self.W0, self.W1 = W[:, :200], W[:, 200:]
        self.probs = np.linspace(0.1, 0.9, 81)

    def test_weighted_quantiles_unit_weights(self):
        y = np.array([3.0, 1.0, 2.0, 2.0])
        np.testing.assert_array_equal(weighted_quantiles(y, np.ones(4), [0.25, 0.5, 0.51, 1.0]),
                                      [1, 2, 2, 3])

    def test_constant_width_zero_for_weight_blind_draws(self):
        W = np.ones((20, 200))
        band = competitor_constant_width(self.y0, self.y1, W, W, 0.95, self.probs)
        assert np.all(band.width() == 0)

    def test_constant_width_is_constant(self):
        band = competitor_constant_width(self.y0, self.y1, self.W0, self.W1, 0.95, self.probs)
        w = band.width()
        assert np.all(w == w[0]) and w[0] > 0

    def test_jittered_quantiles_of_repeated_value(self):
        y = np.full(50, 4.0)
        noise = np.random.default_rng(3).random(50)
        q = weighted_quantiles(y + noise, np.ones(50), self.probs)
        assert np.all((q >= 4.0) & (q < 5.0))

    def test_jitter_variants_share_width(self):
        noise = np.random.default_rng(4).random((2, 200))
        a = competitor_jitter(self.y0, self.y1, self.W0, self.W1, 0.95, self.probs,
                              noise[0], noise[1], "smoothed")
        b = competitor_jitter(self.y0, self.y1, self.W0, self.W1, 0.95, self.probs,
                              noise[0], noise[1], "raw")
        np.testing.assert_allclose(a.width(), b.width(), atol=1e-12)
        with pytest.raises(ValueError):
            competitor_jitter(self.y0, self.y1, self.W0, self.W1, 0.95, self.probs,
                              noise[0], noise[1], "median")

    def test_direct_supt_has_zero_ses(self):
        diag = direct_supt_diagnostic(self.y0, self.y1, self.W0, self.W1, self.probs)
        assert not diag.computable and diag.zero_se_fraction > 0.5
        assert diag.zero_se_probs.size > 0


class TestReplications:
    design = SimDesign(params=(3.0, 3.0), n=100, nsim=6, B=60, seed=11, competitors=True)

    def test_replication_is_pure(self):
        assert run_replication(self.design, 3) == run_replication(self.design, 3)
        assert run_replication(self.design, 3) != run_replication(self.design, 4)

    def test_outputs(self):
        out = run_replication(self.design, 0)
        for key in ("cov_f0", "cov_f1", "cov_all", "cov_qe", "reject",
                    "cov_boot", "cov_jitter1", "cov_jitter2"):
            assert out[key] in (0.0, 1.0)
        assert out["cov_all"] <= out["cov_qe"]
        for key in ("len_new", "len_boot", "len_jitter1", "len_jitter2"):
            assert out[key] >= 0

    def test_run_design_deterministic_and_schedule_free(self):
        a = run_design(self.design)
        b = run_design(self.design, n_jobs=2)
        assert a.rates == b.rates and a.lengths == b.lengths
        assert all(0 <= v <= 1 for v in a.rates.values())

    def test_aggregate_standard_errors(self):
        res = [{"cov_f0": 1.0, "len_new": 2.0}, {"cov_f0": 0.0, "len_new": 4.0}]
        rep = aggregate(self.design, res)
        assert rep.rates["cov_f0"] == 0.5
        assert rep.rate_se["cov_f0"] == pytest.approx(math.sqrt(0.125))
        assert rep.lengths["len_new"] == 3.0
        assert rep.length_se["len_new"] == pytest.approx(1.0)
        assert rep.row()["n"] == 100

    def test_ordered_design_runs(self):
        d = SimDesign("ordered", (0.0, 0.2), n=120, nsim=2, B=40, seed=5)
        out = run_replication(d, 0)
        assert set(out) >= {"cov_f0", "reject", "len_new"}
