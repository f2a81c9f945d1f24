import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crgraph import montecarlo as mc
from crgraph import oracle as orc
from crgraph.legendre import optimal_tilt
from crgraph.measures import Kernel, TypeLaw, product_measure
from crgraph.process import ConnectionSchedule, Event

NC = ConnectionSchedule.near_critical()
LAM = Kernel([[1.0, 0.5], [0.5, 2.0]])
MU = TypeLaw([0.6, 0.4])


def one_edge_event():
    # n = 2, k = 1: total mass of L2 is |E|, so mass > 1/2 means the single edge is present
    return Event.half_space(np.ones((1, 1)), 0.5)


class TestNaive:
    def test_entire_is_one(self, uniform2):
        est = mc.mc_event_probability(20, Event.entire(), uniform2[1], uniform2[0], NC, 1000, seed=1)
        assert est.value == 1.0 and est.std_error == 0.0

    def test_bernoulli_half(self):
        est = mc.mc_event_probability(2, one_edge_event(), [1.0], [[1.0]], NC, 100_000, seed=3, conditional=False)
        assert abs(est.value - 0.5) <= 3 * est.std_error
        assert est.std_error == pytest.approx(math.sqrt(est.value * (1 - est.value) / 100_000))

    def test_predicate_event(self):
        ev = Event.predicate(lambda w: w.total_mass > 0.5)
        est = mc.mc_event_probability(2, ev, [1.0], [[1.0]], NC, 5000, seed=3)
        assert abs(est.value - 0.5) <= 3 * est.std_error

    @settings(max_examples=10)
    @given(st.integers(5, 30), st.floats(0.05, 0.5), st.booleans(), st.integers(0, 1000))
    def test_agrees_with_oracle(self, n, radius, conditional, seed):
        ev = Event.ball(product_measure(LAM, MU) * 1.1, radius)
        exact = math.exp(orc.event_log_probability(n, ev, LAM, MU, NC, conditional))
        est = mc.mc_event_probability(n, ev, MU, LAM, NC, 20_000, seed=seed, conditional=conditional)
        se = max(est.std_error, math.sqrt(exact * (1 - exact) / est.samples))
        assert abs(est.value - exact) <= 3.5 * se + 1e-12

    def test_zero_hits_upper_bound(self, uniform2):
        ev = Event.ball(product_measure(*uniform2) * 3.0, 0.01)
        est = mc.mc_event_probability(100, ev, uniform2[1], uniform2[0], NC, 1000, seed=2)
        assert est.value == 0.0 and est.hits == 0
        assert est.upper_bound == pytest.approx(3e-3)

    def test_graph_path_matches_statistic_path(self):
        ev = Event.ball(product_measure(LAM, MU), 0.15)
        a = mc.mc_event_probability(40, ev, MU, LAM, NC, 20_000, seed=4, conditional=False)
        b = mc.mc_event_probability(40, ev, MU, LAM, NC, 3_000, seed=4, conditional=False, method="graph")
        assert abs(a.value - b.value) <= 3 * math.hypot(a.std_error, b.std_error)

    @pytest.mark.parametrize("kwargs", [{"samples": 0}, {"workers": 0}, {"method": "bogus"}])
    def test_invalid_arguments(self, uniform2, kwargs):
        args = {"samples": 10, "workers": 1, "method": "statistic", **kwargs}
        with pytest.raises(ValueError):
            mc.mc_event_probability(10, Event.entire(), uniform2[1], uniform2[0], NC, args["samples"], 1,
                                    workers=args["workers"], method=args["method"])

    def test_counts_must_sum_to_n(self, uniform2):
        with pytest.raises(ValueError):
            mc.mc_event_probability(10, Event.entire(), uniform2[1], uniform2[0], NC, 10, 1, counts=[3, 3])


class TestDeterminism:
    def test_bit_identical(self):
        ev = Event.ball(product_measure(LAM, MU), 0.1)
        a = mc.mc_event_probability(50, ev, MU, LAM, NC, 30_000, seed=9, workers=3)
        b = mc.mc_event_probability(50, ev, MU, LAM, NC, 30_000, seed=9, workers=3)
        assert a == b

    def test_workers_change_stream_not_law(self):
        from crgraph.verify import inv_mc_determinism

        res = inv_mc_determinism()
        assert res.passed, res.detail

    def test_worker_streams_differ(self):
        assert mc.worker_rng(5, 0).random() != mc.worker_rng(5, 1).random()

    def test_blocks_partition(self):
        assert mc._blocks(10, 3) == [4, 3, 3]
        assert sum(mc._blocks(12345, 7)) == 12345


class TestImportanceSampling:
    def test_zero_tilt_equals_naive(self):
        ev = Event.ball(product_measure(LAM, MU), 0.1)
        a = mc.mc_event_probability(50, ev, MU, LAM, NC, 10_000, seed=2)
        b = mc.is_event_probability(50, ev, MU, LAM, NC, np.zeros((2, 2)), 10_000, seed=2)
        assert a.value == b.value

    @pytest.mark.parametrize("conditional", [True, False])
    def test_mean_weight_is_one(self, conditional):
        g = np.array([[0.5, -0.3], [-0.3, 0.8]])
        est = mc.is_event_probability(15, Event.entire(), MU, LAM, NC, g, 100_000, seed=3, conditional=conditional)
        assert abs(est.value - 1.0) <= 3 * est.std_error

    def test_unbiased_on_event(self):
        from crgraph.verify import inv_unbiased_weights

        res = inv_unbiased_weights()
        assert res.passed, res.detail

    def test_graph_path(self):
        m = product_measure(LAM, MU)
        g = optimal_tilt(m * 1.3, m)
        ev = Event.neighbourhood(g, m * 1.3, 0.1)
        exact = math.exp(orc.event_log_probability(30, ev, LAM, MU, NC))
        est = mc.is_event_probability(30, ev, MU, LAM, NC, g, 4000, seed=5, method="graph")
        assert abs(est.value - exact) <= 3 * est.std_error

    def test_rare_event(self):
        m = product_measure(LAM, MU)
        pi = m * 1.6
        g = optimal_tilt(pi, m)
        ev = Event.neighbourhood(g, pi, 0.05)
        exact = math.exp(orc.event_log_probability(150, ev, LAM, MU, NC, tail_cutoff=60.0))
        est = mc.is_event_probability(150, ev, MU, LAM, NC, g, 20_000, seed=6)
        assert exact < 1e-4
        assert abs(est.value - exact) <= 3 * est.std_error
        assert est.relative_error < 0.1
        assert est.effective_sample_size <= est.samples

    def test_degenerate_tilt(self):
        with pytest.raises(mc.TiltError):
            mc.is_event_probability(10, Event.entire(), MU, LAM, NC, np.full((2, 2), -800.0), 10, seed=1)
        with pytest.raises(ValueError):
            mc.is_event_probability(2, Event.entire(), [1.0], [[5.0]], NC, np.ones((1, 1)), 10, seed=1)

    def test_variance_reduction(self):
        from crgraph.verify import inv_variance_reduction

        res = inv_variance_reduction()
        assert res.passed, res.detail

    def test_naive_and_tilted_agree(self):
        from crgraph.verify import inv_naive_vs_is

        res = inv_naive_vs_is()
        assert res.passed, res.detail

    def test_default_tilt(self):
        m = product_measure(LAM, MU)
        ev = Event.ball(m * 2.0, 0.1)
        assert np.allclose(mc.default_tilt(ev, LAM, MU).values, math.log(2))
        with pytest.raises(ValueError):
            mc.default_tilt(Event.half_space(np.ones((2, 2)), 0.1), LAM, MU)


class TestRateEstimate:
    def test_entire(self):
        cfg = mc.EstimatorConfig("mc", MU, LAM, NC, 1000, seed=1)
        rows = mc.rate_estimate([10, 20], lambda n: Event.entire(), cfg)
        assert [r.rate for r in rows] == [0.0, 0.0]

    def test_flagged_zero(self):
        cfg = mc.EstimatorConfig("mc", MU, LAM, NC, 500, seed=1)
        (row,) = mc.rate_estimate([100], lambda n: Event.ball(product_measure(LAM, MU) * 3, 0.01), cfg)
        assert row.flagged and row.rate is None

    def test_matches_oracle_within_ci(self):
        ev = Event.ball(product_measure(LAM, MU) * 1.2, 0.1)
        cfg = mc.EstimatorConfig("is", MU, LAM, NC, 20_000, seed=3, z=3.0)
        for row in mc.rate_estimate([50, 100, 200], lambda n: ev, cfg):
            exact = -orc.event_log_probability(row.n, ev, LAM, MU, NC) / row.n
            assert row.ci_low <= exact <= row.ci_high

    def test_ci_shrinks_like_root_samples(self):
        ev = Event.ball(product_measure(LAM, MU), 0.1)
        widths = []
        for samples in (10_000, 40_000):
            cfg = mc.EstimatorConfig("mc", MU, LAM, NC, samples, seed=4)
            (row,) = mc.rate_estimate([60], lambda n: ev, cfg)
            widths.append(row.ci_high - row.ci_low)
        assert widths[1] / widths[0] == pytest.approx(0.5, rel=0.1)

    def test_unknown_method(self):
        cfg = mc.EstimatorConfig("bogus", MU, LAM, NC, 10, seed=1)
        with pytest.raises(ValueError):
            mc.rate_estimate([10], lambda n: Event.entire(), cfg)
