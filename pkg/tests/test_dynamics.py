import math

import numpy as np
import pytest

from nspoisson.dynamics import (KappaMeasure, dissipativity_from_norms, dissipativity_score, entropy,
                                entropy_aut1_form, kappa_chi_sum, koopman_overlap_mc,
                                stationarity_defect, zero_type_profile)
from nspoisson.errors import ArgumentError, PreconditionError
from nspoisson.measure import Window, lebesgue, weighted_line
from nspoisson.nsmap import (ActionZ, identity_map, make_density_map, make_swap, swap_action,
                             translation_action)

WL = weighted_line()
SQ = (math.sqrt(2) - 1) ** 2


class TestKappa:
    def test_validation(self):
        with pytest.raises(ArgumentError):
            KappaMeasure((1, 2), (0.5, 0.6))
        with pytest.raises(ArgumentError):
            KappaMeasure((1, 1), (0.5, 0.5))
        with pytest.raises(ArgumentError):
            KappaMeasure((), ())

    def test_symmetry(self):
        assert KappaMeasure.symmetric_pm(2).symmetric
        assert not KappaMeasure.delta(1).symmetric
        assert KappaMeasure((0,), (1.0,)).symmetric


class TestEntropy:
    def test_translation_closed_form(self):
        # T_1′ = 1/2 on [0, 1) (mass 2); T_{−1}′ = 2 on [−1, 0) (mass 1)
        a = translation_action(1.0, WL)
        forward = 2 * (math.log(2) - 0.5)
        backward = 1 - math.log(2)
        assert entropy(a, KappaMeasure.delta(1), WL) == pytest.approx(forward, abs=1e-12)
        assert entropy(a, KappaMeasure.symmetric_pm(), WL) == pytest.approx((forward + backward) / 2, abs=1e-12)
        assert (forward + backward) / 2 == pytest.approx(math.log(2) / 2, abs=1e-15)

    def test_swap_closed_form(self):
        a = swap_action(Window(-1, 0), Window(0, 2), WL)
        # mass 1 at T′ = 4 and mass 4 at T′ = 1/4
        ref = (3 - math.log(4)) + 4 * (-0.75 + math.log(4))
        assert entropy(a, KappaMeasure.delta(1), WL) == pytest.approx(ref, abs=1e-12)

    def test_density_map(self):
        T = make_density_map(lambda x: np.full(np.shape(x), 2.0), Window(0, 1), lebesgue())
        a = ActionZ(T)
        assert entropy(a, KappaMeasure.delta(1), lebesgue()) == pytest.approx(1 - math.log(2), abs=1e-12)

    def test_identity_is_zero(self):
        assert entropy(ActionZ(identity_map()), KappaMeasure.symmetric_pm(), WL) == 0.0

    @pytest.mark.parametrize("kappa", [KappaMeasure.delta(1), KappaMeasure.symmetric_pm(1),
                                       KappaMeasure((1, 2, -1), (0.2, 0.5, 0.3))])
    def test_aut1_form_agrees(self, kappa):
        a = translation_action(1.0, WL)
        assert entropy_aut1_form(a, kappa, WL) == pytest.approx(entropy(a, kappa, WL), abs=1e-11)

    def test_simplified_form_needs_symmetry(self):
        a = translation_action(1.0, WL)
        k = KappaMeasure.symmetric_pm(1)
        assert entropy_aut1_form(a, k, WL, simplified=True) == pytest.approx(entropy(a, k, WL), abs=1e-11)
        with pytest.raises(PreconditionError):
            entropy_aut1_form(a, KappaMeasure.delta(1), WL, simplified=True)

    def test_symmetric_chi_sum_vanishes(self):
        a = translation_action(0.7, WL)
        assert kappa_chi_sum(a, KappaMeasure.symmetric_pm(3), WL) == pytest.approx(0.0, abs=1e-12)
        assert kappa_chi_sum(a, KappaMeasure.delta(1), WL) == pytest.approx(-0.7, abs=1e-12)


class TestDissipativity:
    def test_translation_is_convergent(self):
        rep = dissipativity_score(translation_action(1.0, WL), range(-40, 41), WL)
        assert rep.verdict == "convergent" and rep.monotone
        assert rep.norms_sq[rep.g.index(5)] == pytest.approx(5 * SQ, abs=1e-12)
        # geometric series: Σ e^{−SQ|g|/2} over all g
        r = math.exp(-SQ / 2)
        total = (1 + r) / (1 - r)
        assert rep.partial_sums[-1] + rep.tail_bound == pytest.approx(total, rel=1e-9)

    def test_identity_is_divergent(self):
        rep = dissipativity_score(ActionZ(identity_map()), range(-20, 21), WL)
        assert rep.verdict == "divergent"
        assert rep.partial_sums == tuple(float(2 * n + 1) for n in range(21))

    def test_summable(self):
        gs = list(range(-10, 11))
        rep = dissipativity_from_norms(gs, [100.0 * g * g for g in gs])
        assert rep.verdict == "summable"
        assert rep.tail_bound < 1e-12

    def test_harmonic_terms_not_called_convergent(self):
        # e^{−½‖c‖²} = 1/(1+|g|): the ratio test alone would accept this range
        gs = list(range(-50, 51))
        rep = dissipativity_from_norms(gs, [2 * math.log1p(abs(g)) for g in gs])
        assert rep.verdict == "inconclusive"

    def test_quadratic_decay_convergent(self):
        gs = list(range(-64, 65))
        rep = dissipativity_from_norms(gs, [6 * math.log1p(abs(g)) for g in gs])
        assert rep.verdict == "convergent"

    def test_non_decaying_oscillation_divergent(self):
        gs = list(range(-20, 21))
        rep = dissipativity_from_norms(gs, [1.0 + (abs(g) % 2) for g in gs])
        assert rep.verdict == "divergent"

    def test_decaying_oscillation_inconclusive(self):
        gs = list(range(-20, 21))
        rep = dissipativity_from_norms(gs, [2 * math.log1p(abs(g)) + (abs(g) % 2) for g in gs])
        assert rep.verdict == "inconclusive"

    def test_zero_type_profile(self):
        prof = zero_type_profile(translation_action(1.0, WL), [3, -1, 0, 2, 1], WL)
        assert prof.g == (0, -1, 1, 2, 3)
        assert prof.envelope[1] == pytest.approx(math.sqrt(SQ), abs=1e-12)
        assert prof.bounded

    def test_overlap_mc(self):
        a = translation_action(1.0, WL)
        est = koopman_overlap_mc(a, 2, WL, Window(-4, 4), 20000, 31)
        assert est.target == pytest.approx(math.exp(-SQ), abs=1e-12)
        assert est.z < 4


class TestStationarity:
    def test_conservative_swap_is_stationary(self):
        a = swap_action(Window(0, 1), Window(1, 2), lebesgue())
        rep = stationarity_defect(a, KappaMeasure.symmetric_pm(), lebesgue(), [Window(0.5, 1.5)], 4000, 2)
        assert rep.defect <= 1e-12
        assert rep.records[0].void_gap == pytest.approx(0.0, abs=1e-12)

    def test_translation_defect(self):
        a = translation_action(1.0, WL)
        w = Window(-1.0, 0.0)
        rep = stationarity_defect(a, KappaMeasure.delta(1), WL, [w], 20000, 5)
        r = rep.records[0]
        # T_1 A = [0, 1): mass 2 against 1
        assert r.mass == 1.0 and r.mixed_mass == pytest.approx(2.0)
        assert r.void_gap == pytest.approx(math.exp(-2) - math.exp(-1), abs=1e-12)
        assert r.jensen_gap >= 0.0
        assert abs(r.z) < 4
