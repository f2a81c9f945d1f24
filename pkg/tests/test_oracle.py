import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp

from crgraph import oracle as orc
from crgraph.legendre import optimal_tilt
from crgraph.measures import Kernel, PairMeasure, TypeLaw, kullback_action, product_measure
from crgraph.process import ConnectionSchedule, Event, class_budgets

from .strategies import models

NC = ConnectionSchedule.near_critical()


class TestConfigConversion:
    def test_cross(self):
        pi = orc.config_to_pair_measure([1, 1], [0, 1, 0], NC)
        assert np.array_equal(pi.values, [[0.0, 0.5], [0.5, 0.0]])

    def test_zero(self):
        assert orc.config_to_pair_measure([3, 2], [0, 0, 0], NC).total_mass == 0.0

    def test_monochromatic(self):
        pi = orc.config_to_pair_measure([2, 0], [1, 0, 0], NC)
        assert np.array_equal(pi.values, [[1.0, 0.0], [0.0, 0.0]])

    def test_infeasible(self):
        with pytest.raises(orc.ConfigError):
            orc.config_to_pair_measure([1, 1], [1, 0, 0], NC)

    @given(st.lists(st.integers(1, 20), min_size=2, max_size=3), st.data())
    def test_round_trip(self, counts, data):
        budgets = class_budgets(counts)
        config = np.array([data.draw(st.integers(0, int(N))) for N in budgets])
        pi = orc.config_to_pair_measure(counts, config, NC)
        assert np.array_equal(orc.pair_measure_to_config(counts, pi, NC), config)

    def test_nearest_feasible(self):
        # target asks for more edges than exist: clipped to the class budget
        config = orc.pair_measure_to_config([2, 1], PairMeasure([[5.0, 0.0], [0.0, 0.0]]), NC)
        assert config.tolist() == [1, 0, 0]


class TestCounting:
    def test_two_nodes_one_colour(self):
        assert orc.count_graphs([2], [0]) == 1
        assert orc.count_graphs([2], [1]) == 1

    def test_three_nodes(self):
        assert sum(orc.count_graphs([3], [e]) for e in range(4)) == 8

    def test_forced_cross_edge(self):
        assert orc.count_graphs([1, 1], [0, 1, 0]) == 2

    @given(st.lists(st.integers(0, 60), min_size=1, max_size=3), st.data())
    def test_log_count(self, counts, data):
        if sum(counts) == 0:
            counts[0] = 1
        config = [data.draw(st.integers(0, int(N))) for N in class_budgets(counts)]
        exact = orc.count_graphs(counts, config)
        assert orc.log_count_graphs(counts, config) == pytest.approx(math.log(exact), rel=1e-10, abs=1e-10)

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
    def test_sum_is_all_coloured_graphs(self, n):
        k = 2
        total = 0
        for counts in orc.compositions(n, k):
            budgets = class_budgets(counts)
            for config in itertools.product(*[range(int(N) + 1) for N in budgets]):
                total += orc.count_graphs(counts, config)
        assert total == k ** n * 2 ** math.comb(n, 2)


class TestConfigProbability:
    def test_single_bernoulli(self, uniform2):
        lp = orc.config_log_probability([1, 1], [0, 1, 0], uniform2[0], NC)
        assert lp == pytest.approx(math.log(0.5))

    def test_certain(self):
        lam = Kernel([[5.0]])
        assert orc.config_log_probability([3], [3], lam, NC) == 0.0

    def test_impossible(self):
        lam = Kernel([[1.0, 0.0], [0.0, 1.0]])
        assert orc.config_log_probability([2, 2], [0, 1, 0], lam, NC) == -math.inf

    def test_unconditional_needs_mu(self, uniform2):
        with pytest.raises(ValueError):
            orc.config_log_probability([1, 1], [0, 1, 0], uniform2[0], NC, conditional=False)

    @settings(max_examples=25)
    @given(models(k=2), st.integers(1, 7))
    def test_normalized(self, model, n):
        lam, mu = model
        parts = []
        for counts in orc.compositions(n, 2):
            for config in itertools.product(*[range(int(N) + 1) for N in class_budgets(counts)]):
                parts.append(orc.config_log_probability(counts, config, lam, NC, conditional=False, mu=mu))
        assert logsumexp(parts) == pytest.approx(0.0, abs=1e-10)


class TestEventProbability:
    def test_entire(self, uniform2):
        assert orc.event_log_probability(30, Event.entire(), *uniform2, NC) == 0.0

    def test_huge_ball(self, uniform2):
        ev = Event.ball(product_measure(*uniform2), 1e6)
        assert orc.event_log_probability(20, ev, *uniform2, NC) == pytest.approx(0.0, abs=1e-12)
        assert orc.event_log_probability(8, ev, *uniform2, NC, conditional=False) == pytest.approx(0.0, abs=1e-12)

    def test_budget_guard(self, uniform2):
        ev = Event.half_space(np.ones((2, 2)), 0.0)
        with pytest.raises(orc.EnumerationBudgetExceeded) as info:
            orc.event_log_probability(400, ev, *uniform2, NC, budget=1000)
        assert info.value.needed > 1000

    @settings(max_examples=15)
    @given(models(k=2), st.integers(1, 5), st.floats(0.05, 2.0), st.floats(0.3, 2.0), st.floats(-1.0, 1.0))
    def test_matches_naive(self, model, n, radius, scale, level):
        lam, mu = model
        table = orc.naive_enumerate(n, 2, lam, mu, NC)
        m = product_measure(lam, mu)
        for ev in (Event.ball(m * scale, radius), Event.half_space(np.array([[1.0, -0.5], [-0.5, 2.0]]), level)):
            naive = orc.naive_event_probability(table, ev, NC)
            exact = orc.event_log_probability(n, ev, lam, mu, NC, conditional=False)
            assert (naive == 0 and exact == -math.inf) or math.log(naive) == pytest.approx(exact, abs=1e-10)

    def test_conditional_mixture(self):
        # unconditional law = multinomial mixture of the conditional ones
        lam, mu = Kernel([[1.0, 3.0], [3.0, 0.5]]), TypeLaw([0.3, 0.7])
        ev = Event.ball(product_measure(lam, mu) * 1.3, 0.4)
        n = 9
        parts = [orc.log_type_probability(c, mu) + orc.event_log_probability(n, ev, lam, mu, NC, counts=c)
                 for c in orc.compositions(n, 2)]
        assert logsumexp(parts) == pytest.approx(orc.event_log_probability(n, ev, lam, mu, NC, conditional=False))

    def test_tail_cutoff_bound(self):
        lam, mu = Kernel([[1.0, 0.5], [0.5, 2.0]]), TypeLaw([0.6, 0.4])
        m = product_measure(lam, mu)
        g = optimal_tilt(m * 1.3, m)
        ev = Event.neighbourhood(g, m * 1.3, 0.1)
        exact = orc.event_enumeration(30, ev, lam, mu, NC)
        cut = orc.event_enumeration(30, ev, lam, mu, NC, tail_cutoff=15.0)
        assert cut.configs < exact.configs
        diff = math.exp(exact.log_value) - math.exp(cut.log_value)
        assert 0 <= diff <= cut.neglected_bound + 1e-15

    def test_monotone_in_radius(self):
        from crgraph.verify import inv_event_monotone

        res = inv_event_monotone()
        assert res.passed, res.detail


class TestNaive:
    def test_graph_count(self, uniform2):
        table = orc.naive_enumerate(3, 2, *uniform2, NC)
        assert table.graphs == 64
        assert sum(table.counts.values()) == 64
        assert sum(table.prob.values()) == pytest.approx(1.0)

    def test_counts_match(self):
        lam, mu = Kernel([[0.5, 2.0], [2.0, 3.0]]), TypeLaw([0.4, 0.6])
        table = orc.naive_enumerate(5, 2, lam, mu, NC)
        for (counts, config), c in table.counts.items():
            assert c == orc.count_graphs(counts, config)
            lp = orc.config_log_probability(counts, config, lam, NC, conditional=False, mu=mu)
            assert math.log(table.prob[(counts, config)]) == pytest.approx(lp, abs=1e-10)

    def test_budget(self, uniform2):
        with pytest.raises(orc.EnumerationBudgetExceeded):
            orc.naive_enumerate(9, 2, *uniform2, NC)


class TestCard:
    @pytest.mark.parametrize("n,k", [(5, 2), (30, 3), (200, 2)])
    def test_entire_closed_form(self, n, k):
        res = orc.log_card(n, Event.entire(), NC, k)
        assert res.log_value == pytest.approx(n * math.log(k) + math.comb(n, 2) * math.log(2))

    @pytest.mark.parametrize("n", [2, 4, 6])
    def test_entire_via_lattice(self, n):
        huge = Event.ball(PairMeasure.zeros(2), 1e9)
        assert orc.exact_card(n, huge, NC, 2) == 2 ** n * 2 ** math.comb(n, 2)
        assert orc.log_card(n, huge, NC, 2).log_value == pytest.approx(n * math.log(2) + math.comb(n, 2) * math.log(2))

    @pytest.mark.parametrize("n", [3, 5, 6])
    def test_ball_matches_naive(self, uniform2, n):
        table = orc.naive_enumerate(n, 2, *uniform2, NC)
        ev = Event.ball(product_measure(*uniform2), 0.5)
        exact = orc.exact_card(n, ev, NC, 2)
        assert orc.naive_card(table, ev, NC) == exact
        assert orc.log_card(n, ev, NC, 2).log_value == pytest.approx(math.log(exact), abs=1e-10)

    def test_mcmillan_row(self, uniform2):
        ev = Event.ball(product_measure(*uniform2), 0.05)
        row = orc.mcmillan_count_report(50, ev, *uniform2, NC)
        assert row.entropy_term == pytest.approx(50 * math.log(2))
        assert row.gap == pytest.approx(row.log_card - row.entropy_term)
        assert row.configs > 0


class TestRates:
    def test_ball_infimum_matches_grid(self, uniform2):
        ev = Event.ball(product_measure(*uniform2) * 1.5, 0.02)
        clip = orc.rate_infimum(ev, *uniform2)
        assert clip == pytest.approx(orc.rate_infimum_grid(ev, *uniform2, points=161), abs=1e-12)
        assert clip < kullback_action(ev.center, *uniform2)

    def test_ball_containing_m(self, uniform2):
        assert orc.rate_infimum(Event.ball(product_measure(*uniform2), 0.1), *uniform2) == 0.0

    def test_entire(self, uniform2):
        assert orc.rate_infimum(Event.entire(), *uniform2) == 0.0

    @given(models(k=2), st.data())
    def test_half_space_infimum_is_a_lower_bound(self, model, data):
        lam, mu = model
        g = np.array([[1.0, 0.3], [0.3, -0.5]])
        m = product_measure(lam, mu)
        level = float(np.sum(g * m.values)) + data.draw(st.floats(0.01, 1.0))
        ref = orc.rate_infimum(Event.half_space(g, level), lam, mu)
        # any feasible point has action at least the infimum
        shape = np.exp(data.draw(st.lists(st.floats(-2, 2), min_size=3, max_size=3)))
        w = m.values * np.array([[shape[0], shape[1]], [shape[1], shape[2]]])
        s = np.sum(g * w)
        if s > 0:
            w = w * max(1.0, 1.0001 * level / s)
            if np.sum(g * w) > level:
                assert kullback_action(w, lam, mu) >= ref - 1e-12

    def test_half_space_unreachable(self, uniform2):
        assert orc.rate_infimum(Event.half_space(-np.ones((2, 2)), 0.5), *uniform2) == math.inf

    def test_richardson_exact_on_linear(self):
        pts = [(n, 0.3 + 2.0 / n) for n in (100, 200, 400)]
        assert orc.richardson(pts) == pytest.approx(0.3)

    def test_sequence_entire(self, uniform2):
        seq = orc.rate_sequence(lambda n: Event.entire(), [10, 20, 40], *uniform2, NC)
        assert all(r == 0.0 for _, r in seq.points)

    def test_sequence_typical_half_space(self, uniform2):
        m = product_measure(*uniform2)
        ev = Event.half_space(np.ones((2, 2)), 0.5 * m.total_mass)
        seq = orc.rate_sequence(lambda n: ev, [20, 40, 80, 160], *uniform2, NC, tail_cutoff=40.0)
        rates = [r for _, r in seq.points]
        assert rates[-1] < rates[0]
        assert rates[-1] < 1e-3
        assert seq.monotone

    def test_single_configuration_exponent(self):
        from crgraph.verify import inv_exact_lldp

        res = inv_exact_lldp()
        assert res.passed, res.detail

    @pytest.mark.slow
    def test_half_space_rates(self):
        from crgraph.verify import inv_halfspace_rate

        res = inv_halfspace_rate()
        assert res.passed, res.detail
