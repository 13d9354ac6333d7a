import math

import numpy as np
import pytest
from scipy import stats as sps

from walksieve.errors import ConfigError, HypothesisError, InsufficientPoints
from walksieve.increments import IncrementLaw
from walksieve.pointproc import (
    FiniteMeanStableModel,
    InfiniteMeanStableModel,
    LatticeModel,
    PointPattern,
    PoissonModel,
    SelfSimilarProfile,
    cluster_stats,
    distinct_counts,
    exp_running_maxima,
    first_cluster,
    make_stable_finite_mean,
    make_stable_infinite_mean,
    max_of_exponentials,
    poisson_pattern,
    record_values,
    scale,
    self_similarity_check,
    stability_test,
    thin,
    walk_indices,
)
from walksieve.rng import substream
from walksieve.sieve import WalkPath

GEO = IncrementLaw.geometric(0.5)


def rng(*key):
    return substream(2718, "test-pointproc", *key)


class TestPattern:
    def test_invariants(self):
        with pytest.raises(ValueError):
            PointPattern([2.0, 1.0])
        with pytest.raises(ValueError):
            PointPattern([-1.0, 1.0])
        with pytest.raises(ValueError):
            PointPattern([1.0, 5.0], truncation=4.0)
        p = PointPattern([1.0, 1.0, 2.0])
        assert len(p) == 3
        with pytest.raises(ValueError):
            p.points[0] = 0.0

    def test_at(self):
        p = PointPattern([1.0, 2.0, 4.0])
        assert p.at(3) == 4.0
        assert list(p.at([1, 2])) == [1.0, 2.0]
        with pytest.raises(InsufficientPoints):
            p.at(4)

    def test_equality(self):
        assert PointPattern([1, 2], 3) == PointPattern([1.0, 2.0], 3.0)
        assert PointPattern([1, 2], 3) != PointPattern([1, 2], 4)
        assert len({PointPattern([1, 2]), PointPattern([1, 2])}) == 1


class TestThinScale:
    def test_degenerate_walk(self):
        p = poisson_pattern(1.0, 20.0, rng("deg"))
        assert thin(p, WalkPath(IncrementLaw.degenerate_one(), rng())) == p

    def test_direct_indexing(self):
        p = PointPattern([1, 2, 3, 4, 5, 6], 6)
        assert list(thin(p, WalkPath(None, increments=[2, 2, 2])).points) == [2, 4, 6]

    def test_empty_pattern(self):
        with pytest.raises(ValueError):
            thin(PointPattern([]), WalkPath(GEO, rng()))

    def test_scale(self):
        p = PointPattern([1.0, 2.0], 2.0)
        assert scale(p, 1.0) == p
        assert list(scale(p, 0.5).points) == [0.5, 1.0]
        assert scale(p, 0.5).truncation == 1.0
        with pytest.raises(ValueError):
            scale(p, 0.0)

    def test_scale_round_trip(self):
        p = poisson_pattern(3.0, 50.0, rng("rt"))
        for a in (0.3, 0.5, 1.7, 1e-3):
            back = scale(scale(p, a), 1 / a).points
            assert np.all(np.abs(back - p.points) <= np.spacing(p.points))

    def test_poisson_thinning_and_halving_is_poisson(self):
        r = rng("thin")
        rows = []
        for _ in range(10**4):
            p = poisson_pattern(1.0, 100.0, r)
            q = scale(thin(p, WalkPath(GEO, r)), 0.5)
            rows.append(q.at(np.arange(1, 21)))
        thinned = np.array(rows)
        fresh = PoissonModel().at(np.broadcast_to(np.arange(1.0, 21), (10**5, 20)), rng("fresh"))
        for j in range(20):
            assert sps.ks_2samp(thinned[:, j], fresh[:, j]).statistic < 0.02


class TestProfiles:
    def test_identity_and_power(self):
        t = np.array([0.0, 0.5, 2.0])
        assert np.array_equal(SelfSimilarProfile.identity().realize()(t), t)
        assert np.allclose(SelfSimilarProfile.power_law(2.0).realize()(t), t**2)

    def test_piecewise_is_nondecreasing_and_self_similar(self):
        prof = SelfSimilarProfile.piecewise_random(2.0, period_seed=5)
        g = prof.realize()
        t = np.geomspace(1e-3, 1e3, 5000)
        v = g(t)
        assert np.all(np.diff(v) >= 0)
        assert np.allclose(g(2 * t), 2 * v, rtol=1e-12)
        assert g(0.0) == 0.0
        # the staircase is not the identity
        assert not np.allclose(v, t)

    def test_period_seed_pins_the_realisation(self):
        prof = SelfSimilarProfile.piecewise_random(0.5, period_seed=9)
        t = np.linspace(0.1, 10, 50)
        assert np.array_equal(prof.realize()(t), prof.realize()(t))
        assert prof.period == 2.0 and prof.matches(2.0) and prof.matches(0.5) and not prof.matches(3.0)

    def test_piecewise_needs_a_stream(self):
        with pytest.raises(ValueError):
            SelfSimilarProfile.piecewise_random(2.0).realize()

    def test_descriptors(self):
        for prof in (
            SelfSimilarProfile.identity(),
            SelfSimilarProfile.power_law(1.5),
            SelfSimilarProfile.piecewise_random(2.0, period_seed=3),
        ):
            assert SelfSimilarProfile.from_dict(prof.to_dict()) == prof
        with pytest.raises(ConfigError, match="profile.gamma"):
            SelfSimilarProfile.from_dict({"kind": "identity", "gamma": 1})
        with pytest.raises(ConfigError):
            SelfSimilarProfile("staircase")
        with pytest.raises(ConfigError):
            SelfSimilarProfile.piecewise_random(1.0)
        with pytest.raises(ConfigError):
            SelfSimilarProfile.power_law(-1.0)

    @pytest.mark.parametrize("c", [2.0, 0.5, 3.0])
    def test_self_similarity_check(self, c):
        rep = self_similarity_check(SelfSimilarProfile.piecewise_random(c), realizations=10**4, seed=1)
        assert rep.passed

    def test_self_similarity_check_detects_wrong_period(self):
        # a staircase of period 2 is not self-similar for factor 3
        prof = SelfSimilarProfile.piecewise_random(2.0)
        g = prof.realize(rng("wrong"), 10**4)
        t = np.full((10**4, 1), 0.7)
        assert sps.ks_2samp(g(3 * t)[:, 0], 3 * g(t)[:, 0]).statistic > 0.02


class TestConstructive:
    def test_identity_finite_mean_is_poisson(self):
        p = make_stable_finite_mean(GEO, SelfSimilarProfile.identity(), 10**5 + 1, seed=3)
        gaps = np.diff(np.concatenate([[0.0], p.points]))
        assert sps.kstest(gaps, "expon").statistic < 0.02
        assert p.truncation == p.points[-1]

    def test_power_law_is_a_transform(self):
        base = make_stable_finite_mean(GEO, SelfSimilarProfile.identity(), 50, seed=4)
        sq = make_stable_finite_mean(GEO, SelfSimilarProfile.power_law(2.0), 50, seed=4)
        assert np.allclose(sq.points, base.points**2, rtol=1e-15)

    def test_single_point(self):
        x = [make_stable_finite_mean(GEO, SelfSimilarProfile.identity(), 1, seed=s).points[0] for s in range(2000)]
        assert sps.kstest(x, "expon").pvalue > 0.001
        y = [make_stable_infinite_mean(0.5, SelfSimilarProfile.identity(), 1, seed=s).points[0] for s in range(2000)]
        assert sps.kstest(y, "expon").pvalue > 0.001

    def test_deterministic(self):
        prof = SelfSimilarProfile.piecewise_random(2.0)
        assert make_stable_finite_mean(GEO, prof, 30, seed=1) == make_stable_finite_mean(GEO, prof, 30, seed=1)
        assert make_stable_finite_mean(GEO, prof, 30, seed=1) != make_stable_finite_mean(GEO, prof, 30, seed=2)

    def test_hypotheses(self):
        with pytest.raises(HypothesisError):
            make_stable_finite_mean(IncrementLaw.degenerate_one(), SelfSimilarProfile.identity(), 5, seed=0)
        with pytest.raises(HypothesisError):
            make_stable_finite_mean(GEO, SelfSimilarProfile.piecewise_random(3.0), 5, seed=0)
        with pytest.raises(HypothesisError):
            make_stable_infinite_mean(IncrementLaw.davies_pareto(0.5), SelfSimilarProfile.identity(), 5, seed=0)
        with pytest.raises(HypothesisError):
            make_stable_infinite_mean(1.5, SelfSimilarProfile.identity(), 5, seed=0)
        with pytest.raises(HypothesisError):
            make_stable_infinite_mean(0.5, SelfSimilarProfile.piecewise_random(3.0), 5, seed=0)

    def test_running_maxima_distinct_count(self):
        rows = exp_running_maxima(1000, rng("renyi"), 10**4)
        assert 6.8 <= distinct_counts(rows).mean() <= 8.2
        p = make_stable_infinite_mean(0.5, SelfSimilarProfile.identity(), 1000, seed=7)
        assert len(cluster_stats(p)) == distinct_counts(p.points)[0]

    def test_record_values_form_a_poisson_process(self):
        rows = exp_running_maxima(1000, rng("records"), 10**4)
        gaps = np.concatenate([np.diff(r, prepend=0.0) for r in record_values(rows)])
        # all gaps except the first in each row: the first record is E_1 itself, also Exp(1)
        assert sps.kstest(gaps, "expon").statistic < 0.02

    def test_max_of_exponentials(self):
        m = np.full(10**5, 7.0)
        x = max_of_exponentials(m, rng("maxexp"))
        direct = rng("maxexp2").standard_exponential((10**5, 7)).max(axis=1)
        assert sps.ks_2samp(x, direct).statistic < 0.01


class TestStability:
    def test_poisson_passes(self):
        rep = stability_test(PoissonModel(), GEO, 0.5, k_marginals=10, replicas=10**4, seed=1)
        assert rep.passed, rep.summary_line()
        assert len(rep.checks) == 11

    def test_wrong_constant_fails(self):
        rep = stability_test(PoissonModel(), GEO, 0.7, k_marginals=10, replicas=10**4, seed=1)
        assert not rep.passed
        first = next(c for c in rep.checks if c.name == "marginal_1")
        assert first.statistic > 0.1

    def test_lattice_fails(self):
        for law in (GEO, IncrementLaw.explicit([0.5, 0.5])):
            rep = stability_test(LatticeModel(), law, 1 / law.mu, replicas=2000, seed=1)
            assert not rep.passed

    def test_constructive_finite_mean(self):
        rep = stability_test(FiniteMeanStableModel(GEO), GEO, 0.5, replicas=10**4, seed=2)
        assert rep.passed, rep.summary_line()

    def test_constructive_power_law(self):
        model = FiniteMeanStableModel(GEO, SelfSimilarProfile.power_law(2.0))
        assert stability_test(model, GEO, 0.25, replicas=10**4, seed=3).passed

    def test_constructive_infinite_mean(self):
        law = IncrementLaw.sibuya(0.5)
        rep = stability_test(InfiniteMeanStableModel(law), law, 0.5, replicas=10**4, seed=4)
        assert rep.passed, rep.summary_line()

    def test_constructive_piecewise_infinite_mean(self):
        law = IncrementLaw.sibuya(0.5)
        model = InfiniteMeanStableModel(0.5, SelfSimilarProfile.piecewise_random(0.5))
        assert stability_test(model, law, 0.5, replicas=10**4, seed=5).passed

    def test_materialised_sampler(self):
        rep = stability_test(lambda r: poisson_pattern(1.0, 80.0, r), GEO, 0.5, k_marginals=5, replicas=2000, seed=6, threshold=0.05)
        assert rep.passed

    def test_insufficient_points(self):
        with pytest.raises(InsufficientPoints):
            stability_test(lambda r: poisson_pattern(1.0, 5.0, r), GEO, 0.5, k_marginals=10, replicas=100, seed=0)

    def test_walk_indices(self):
        idx = walk_indices(GEO, rng("idx"), 1000, 5)
        assert np.all(np.diff(idx, axis=1) >= 1) and idx[:, -1].mean() == pytest.approx(10, rel=0.05)


class TestClusters:
    def test_exact_grouping(self):
        assert cluster_stats(PointPattern([1, 1, 1, 2, 3, 3])) == [(1.0, 3), (2.0, 1), (3.0, 2)]
        assert cluster_stats(PointPattern([])) == []

    def test_tolerance(self):
        assert cluster_stats([1.0, 1.05, 1.08, 2.0], tolerance=0.1) == [(1.0, 3), (2.0, 1)]
        with pytest.raises(ValueError):
            cluster_stats([1.0], tolerance=-1)

    def test_first_cluster_of_running_maxima(self):
        # the first maximum is repeated a Geometric(exp(-l)) number of times given its value l
        rows = exp_running_maxima(200, rng("fc"), 20_000)
        loc, mult = first_cluster(rows)
        p = np.exp(-loc)
        u = sps.geom.cdf(mult, p) - sps.geom.pmf(mult, p) * rng("pit").random(mult.size)
        ok = mult < 200
        assert sps.kstest(u[ok], "uniform").statistic < 0.02
        # censored rows: all 199 later draws stayed below the first one
        assert math.isclose(np.mean(mult == 200), np.mean((1 - p) ** 199), abs_tol=0.01)
