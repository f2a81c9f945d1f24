import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crgraph.measures import (
    Kernel,
    MeasureError,
    PairMeasure,
    PotentialOverflow,
    TestFunction,
    TypeAlphabet,
    TypeLaw,
    is_absolutely_continuous,
    kullback_action,
    mcmillan_entropy,
    pairing,
    product_measure,
    relative_entropy_extended,
    shannon_entropy,
    spectral_potential,
    total_mass,
)

from .strategies import model_and_measure, models, symmetric_functions

LOG2 = math.log(2.0)
H_2M = (2 * LOG2 + 1 - 2) / 2  # kullback action of 2m when the mass of m is 1


class TestTypes:
    def test_type_law_must_be_normalized(self):
        with pytest.raises(MeasureError):
            TypeLaw([0.5, 0.6])

    def test_type_law_rejects_negative(self):
        with pytest.raises(MeasureError):
            TypeLaw([1.5, -0.5])

    def test_type_law_from_counts(self):
        assert np.allclose(TypeLaw.from_counts([2, 1]).weights, [2 / 3, 1 / 3])

    def test_kernel_rejects_asymmetry(self):
        with pytest.raises(MeasureError):
            Kernel([[1.0, 2.0], [1.0, 1.0]])

    def test_kernel_symmetrizes_roundoff(self):
        lam = Kernel([[1.0, 0.5 + 1e-12], [0.5, 1.0]])
        assert np.array_equal(lam.values, lam.values.T)

    def test_pair_measure_rejects_negative(self):
        with pytest.raises(MeasureError):
            PairMeasure([[0.1, -0.1], [-0.1, 0.1]])

    def test_values_are_read_only(self):
        pi = PairMeasure([[0.1, 0.2], [0.2, 0.3]])
        with pytest.raises(ValueError):
            pi.values[0, 0] = 1.0

    def test_alphabet_labels_unique(self):
        with pytest.raises(MeasureError):
            TypeAlphabet(("a", "a"))

    def test_dimension_mismatch(self):
        with pytest.raises(MeasureError):
            product_measure(Kernel(np.ones((3, 3))), TypeLaw([0.5, 0.5]))


class TestProductMeasure:
    def test_uniform(self, uniform2):
        m = product_measure(*uniform2)
        assert np.allclose(m.values, 0.25)
        assert total_mass(m) == pytest.approx(1.0)

    def test_diagonal_kernel(self):
        m = product_measure(Kernel([[2.0, 0.0], [0.0, 2.0]]), TypeLaw([0.5, 0.5]))
        assert np.allclose(m.values, [[0.5, 0.0], [0.0, 0.5]])
        assert m.total_mass == pytest.approx(1.0)

    def test_degenerate_law(self):
        m = product_measure(Kernel([[3.0, 1.0], [1.0, 2.0]]), TypeLaw([1.0, 0.0]))
        assert np.array_equal(m.values, [[3.0, 0.0], [0.0, 0.0]])


class TestTotalMass:
    def test_zero(self):
        assert total_mass(PairMeasure.zeros(3)) == 0.0

    def test_quarters(self):
        assert total_mass(np.full((2, 2), 0.25)) == 1.0

    def test_sum(self):
        assert total_mass([[0.5, 0.1], [0.1, 0.3]]) == pytest.approx(1.0, abs=1e-15)


class TestSpectralPotential:
    def test_zero_function(self, uniform2):
        assert spectral_potential(np.zeros((2, 2)), *uniform2) == 0.0

    def test_log2(self, uniform2):
        assert spectral_potential(np.full((2, 2), LOG2), *uniform2) == pytest.approx(0.5, abs=1e-15)

    def test_constant_closed_form(self, uniform2):
        assert spectral_potential(TestFunction.constant(2, 1.0), *uniform2) == pytest.approx((math.e - 1) / 2)

    def test_null_cells_ignored(self):
        lam, mu = Kernel([[1.0, 0.0], [0.0, 1.0]]), TypeLaw([0.5, 0.5])
        g = np.array([[0.0, 5000.0], [5000.0, 0.0]])
        assert spectral_potential(g, lam, mu) == 0.0

    def test_overflow_is_flagged(self, uniform2):
        with pytest.warns(PotentialOverflow):
            assert spectral_potential(np.full((2, 2), 800.0), *uniform2) == math.inf
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            value, flag = spectral_potential(np.full((2, 2), 800.0), *uniform2, with_flag=True)
        assert value == math.inf and flag

    @given(models(), st.data())
    def test_monotone(self, model, data):
        lam, mu = model
        g1 = data.draw(symmetric_functions(lam.k))
        bump = np.abs(data.draw(symmetric_functions(lam.k)))
        assert spectral_potential(g1, lam, mu) <= spectral_potential(g1 + bump, lam, mu) + 1e-12

    @given(models(), st.data())
    def test_midpoint_convex(self, model, data):
        lam, mu = model
        g1, g2 = data.draw(symmetric_functions(lam.k)), data.draw(symmetric_functions(lam.k))
        mid = spectral_potential(0.5 * (g1 + g2), lam, mu)
        assert mid <= 0.5 * (spectral_potential(g1, lam, mu) + spectral_potential(g2, lam, mu)) + 1e-12

    def test_not_additively_homogeneous(self, uniform2):
        # rho(g + c) - rho(g) depends on g, so no additive homogeneity is claimed
        g = np.zeros((2, 2))
        c = 1.0
        d1 = spectral_potential(g + c, *uniform2) - spectral_potential(g, *uniform2)
        d2 = spectral_potential(g + 1 + c, *uniform2) - spectral_potential(g + 1, *uniform2)
        assert d1 != pytest.approx(d2)


class TestKullbackAction:
    def test_zero_at_m(self, uniform2):
        m = product_measure(*uniform2)
        assert kullback_action(m, *uniform2) == 0.0

    def test_twice_m(self, uniform2):
        m = product_measure(*uniform2)
        assert kullback_action(m * 2.0, *uniform2) == pytest.approx(H_2M, abs=1e-15)
        assert H_2M == pytest.approx(0.193147, abs=1e-6)

    def test_off_support_is_infinite(self):
        lam, mu = Kernel([[1.0, 0.0], [0.0, 1.0]]), TypeLaw([0.5, 0.5])
        pi = PairMeasure([[0.25, 0.1], [0.1, 0.25]])
        assert kullback_action(pi, lam, mu) == math.inf

    def test_zero_measure(self, uniform2):
        # only the + m term survives: H(0) = ||m|| / 2
        assert kullback_action(PairMeasure.zeros(2), *uniform2) == pytest.approx(0.5)

    def test_one_point_five_m(self, uniform2):
        m = product_measure(*uniform2)
        expected = (1.5 * math.log(1.5) - 0.5) / 2
        assert kullback_action(m * 1.5, *uniform2) == pytest.approx(expected, abs=1e-15)
        assert expected == pytest.approx(0.054099, abs=1e-6)

    @given(model_and_measure())
    def test_nonnegative_and_zero_only_at_m(self, inst):
        lam, mu, pi = inst
        h = kullback_action(pi, lam, mu)
        m = product_measure(lam, mu)
        assert h >= 0
        if not np.array_equal(pi.values, m.values):
            # equality is exact only at m; tiny perturbations may underflow, so test the rest
            if np.max(np.abs(np.log(pi.values / m.values))) > 1e-4:
                assert h > 0

    @given(model_and_measure(), st.data())
    def test_convex(self, inst, data):
        lam, mu, p1 = inst
        p2 = PairMeasure(p1.values * np.exp(data.draw(symmetric_functions(lam.k, 2.0))))
        mid = kullback_action(0.5 * (p1 + p2), lam, mu)
        avg = 0.5 * (kullback_action(p1, lam, mu) + kullback_action(p2, lam, mu))
        assert mid <= avg + 1e-10

    @given(model_and_measure(), st.floats(0.02, 50.0))
    def test_sublevel_mass_bound(self, inst, scale):
        lam, mu, shape = inst
        pi = shape * scale
        c = kullback_action(pi, lam, mu)
        mm = product_measure(lam, mu).total_mass
        mass = pi.total_mass
        assert mass * math.log(mass / (math.e * mm)) <= 2 * c + mm + 1e-9


class TestRelativeEntropy:
    def test_equal(self):
        s = PairMeasure([[0.2, 0.3], [0.3, 0.2]])
        assert relative_entropy_extended(s, s) == 0.0

    def test_double(self):
        s = PairMeasure([[0.2, 0.3], [0.3, 0.2]])
        assert relative_entropy_extended(s * 2.0, s) == pytest.approx(2 * LOG2 - 1)
        assert 2 * LOG2 - 1 == pytest.approx(0.386294, abs=1e-6)

    def test_not_absolutely_continuous(self):
        s = PairMeasure([[0.5, 0.0], [0.0, 0.5]])
        p = PairMeasure([[0.5, 0.1], [0.1, 0.5]])
        assert not is_absolutely_continuous(p, s)
        assert relative_entropy_extended(p, s) == math.inf

    def test_zero_log_zero(self):
        s = PairMeasure([[0.5, 0.2], [0.2, 0.5]])
        p = PairMeasure([[0.5, 0.0], [0.0, 0.5]])
        assert relative_entropy_extended(p, s) == pytest.approx(0.4)


class TestMcMillanEntropy:
    def test_at_m_uniform(self, uniform2):
        m = product_measure(*uniform2)
        assert mcmillan_entropy(m, *uniform2) == pytest.approx(LOG2, abs=1e-15)

    def test_unit_mass(self, uniform2):
        rho = PairMeasure([[1.0, 0.0], [0.0, 0.0]])
        assert mcmillan_entropy(rho, *uniform2) == pytest.approx(0.0, abs=1e-15)

    def test_zero(self, uniform2):
        assert mcmillan_entropy(PairMeasure.zeros(2), *uniform2) == pytest.approx(-0.5)

    @given(models())
    def test_identity_at_m(self, model):
        lam, mu = model
        m = product_measure(lam, mu)
        mass = m.total_mass
        expected = 0.5 * mass * shannon_entropy(m.values / mass)
        assert mcmillan_entropy(m, lam, mu) == pytest.approx(expected, abs=1e-12)


def test_pairing():
    g = TestFunction([[1.0, 2.0], [2.0, 3.0]])
    pi = PairMeasure([[0.1, 0.2], [0.2, 0.3]])
    assert pairing(g, pi) == pytest.approx(0.1 + 0.8 + 0.9)
