import math

import numpy as np
import pytest
from scipy import integrate

from nspoisson.errors import PreconditionError
from nspoisson.measure import Schedule, Window, lebesgue, weighted_line
from nspoisson.nsmap import (ActionZ, aut1_deficiency, aut2_deficiency, change_of_variables_residual,
                             chi, cocycle_identity_residual, cocycle_norm, compose, identity_map,
                             inverse_map, make_density_map, make_dilation, make_swap,
                             make_translation, swap_action, translation_action)

WL = weighted_line()
A, B = Window(-1.0, 0.0), Window(0.0, 2.0)  # masses 1 and 4 on the weighted line
XS = np.linspace(-3.3, 3.7, 41)
BATTERY = [
    lambda x: np.exp(-x * x),
    lambda x: np.cos(3 * x),
    lambda x: x ** 2,
    lambda x: np.where(x > 0.25, 1.0, 0.0),
    lambda x: 1.0 / (1.0 + x * x),
]


def registered_maps():
    return [
        make_translation(1.0, WL),
        make_translation(-0.7, WL),
        make_swap(A, B, WL),
        make_density_map(lambda x: np.full(np.shape(x), 2.0), Window(-1.0, 0.0), WL),
        make_density_map(lambda x: 1.0 + 0.5 * np.sin(np.pi * x) ** 2, Window(-2.0, -1.0), WL),
        compose(make_translation(0.5, WL), make_swap(A, B, WL)),
    ]


@pytest.mark.parametrize("T", registered_maps(), ids=lambda T: T.label)
class TestRegisteredMaps:
    def test_inverse_roundtrip(self, T):
        assert np.allclose(T.inverse(T.forward(XS)), XS, atol=1e-10)

    def test_rn_positive(self, T):
        assert np.all(T.rn(XS) > 0)

    @pytest.mark.parametrize("h", BATTERY)
    def test_change_of_variables(self, T, h):
        assert change_of_variables_residual(T, WL, h, Window(-1.5, 2.5)) <= 1e-8

    def test_aut2_below_aut1(self, T):
        assert aut2_deficiency(T, WL) <= aut1_deficiency(T, WL) + 1e-14


class TestSwap:
    def test_involution(self):
        S = make_swap(A, B, WL)
        SS = compose(S, S)
        assert np.allclose(SS.forward(XS), XS, atol=1e-12)
        assert np.allclose(SS.rn(XS), 1.0)

    def test_norms_closed_form(self):
        S = make_swap(A, B, WL)
        # T′ = μ(B)/μ(A) = 4 on A (mass 1) and 1/4 on B (mass 4)
        assert S.rn(np.array([-0.5, 1.0])).tolist() == [4.0, 0.25]
        assert aut2_deficiency(S, WL) == pytest.approx(2.0, abs=1e-12)
        assert aut1_deficiency(S, WL) == pytest.approx(6.0, abs=1e-12)
        assert chi(S, WL) == pytest.approx(0.0, abs=1e-12)

    def test_equal_masses_preserve(self):
        S = make_swap(Window(0, 1), Window(1, 2), lebesgue())
        assert S.measure_preserving
        assert chi(S, lebesgue()) == 0.0


class TestTranslation:
    @pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
    def test_chi_of_negative_shift(self, t):
        assert chi(make_translation(-t, WL), WL) == pytest.approx(t, abs=1e-12)

    @pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
    def test_aut2_against_direct_quadrature(self, t):
        T = make_translation(-t, WL)
        rho = lambda x: 1.0 if x < 0 else 2.0
        ref, _ = integrate.quad(lambda x: (math.sqrt(rho(x + t) / rho(x)) - 1.0) ** 2 * rho(x),
                                -t - 1, t + 1, points=[-t, 0.0], epsabs=1e-13)
        assert aut2_deficiency(T, WL) == pytest.approx(ref, abs=1e-11)
        assert aut2_deficiency(T, WL) == pytest.approx((math.sqrt(2) - 1) ** 2 * t, abs=1e-12)

    def test_aut1_unit_shift(self):
        assert aut1_deficiency(make_translation(-1.0, WL), WL) == pytest.approx(1.0, abs=1e-12)

    def test_zero_shift_is_identity(self):
        T = make_translation(0.0, WL)
        assert T.measure_preserving and np.array_equal(T.forward(XS), XS)


class TestAlgebra:
    def test_compose_with_inverse(self):
        T = make_translation(1.3, WL)
        I = compose(T, inverse_map(T))
        assert np.allclose(I.forward(XS), XS)
        assert np.allclose(I.rn(XS), 1.0)

    def test_compose_identity(self):
        T = make_swap(A, B, WL)
        C = compose(identity_map(), T)
        assert np.allclose(C.forward(XS), T.forward(XS))
        assert np.allclose(C.rn(XS), T.rn(XS))

    @pytest.mark.parametrize("S, T", [
        (make_translation(1.0, WL), make_translation(0.5, WL)),
        (make_translation(-2.0, WL), make_swap(A, B, WL)),
        (make_density_map(lambda x: np.full(np.shape(x), 2.0), Window(-1, 0), WL), make_translation(0.75, WL)),
    ])
    def test_chi_additive(self, S, T):
        assert chi(compose(S, T), WL) == pytest.approx(chi(S, WL) + chi(T, WL), abs=1e-8)

    def test_inverse_rn_convention(self):
        T = make_translation(1.0, WL)
        Ti = inverse_map(T)
        assert np.allclose(Ti.rn(XS), 1.0 / T.rn(T.forward(XS)))


class TestDensityMap:
    def test_unit_step(self):
        T = make_density_map(lambda x: np.full(np.shape(x), 2.0), Window(0, 1), lebesgue())
        assert np.allclose(T.forward(np.array([-1.0, 1.0, 2.0, 3.0])), [-1.0, 0.5, 1.0, 2.0])
        assert chi(T, lebesgue()) == pytest.approx(1.0, abs=1e-12)

    def test_mass_doubles_on_support(self):
        T = make_density_map(lambda x: np.full(np.shape(x), 2.0), Window(0, 1), lebesgue())
        pre = T.preimage_hull(Window(0, 1))
        assert lebesgue().mass(pre) == pytest.approx(2.0, abs=1e-12)


class TestDivergence:
    def test_dilation_outside_aut2(self):
        D = make_dilation(2.0)
        sched = Schedule.expanding(steps=40)
        assert aut2_deficiency(D, lebesgue(), sched) == math.inf
        with pytest.raises(PreconditionError) as info:
            chi(D, lebesgue(), sched)
        assert info.value.norm == "aut1"


class TestActions:
    def test_generated_iterates_match_direct(self):
        a = ActionZ(make_translation(1.0, WL), cache_range=4)
        T3 = make_translation(3.0, WL)
        for g, T in ((3, T3), (-2, make_translation(-2.0, WL)), (9, make_translation(9.0, WL))):
            assert np.allclose(a.iterate(g).forward(XS), T.forward(XS))
            assert np.allclose(a.iterate(g).rn(XS), T.rn(XS))
        assert np.array_equal(a.iterate(0).forward(XS), XS)

    def test_cocycle_norm_closed_form(self):
        a = translation_action(1.0, WL)
        for g in (1, 2, 5, -3):
            assert cocycle_norm(a, g, WL) == pytest.approx((math.sqrt(2) - 1) * math.sqrt(abs(g)), abs=1e-12)
        assert cocycle_norm(a, 0, WL) == 0.0

    def test_cocycle_subadditive_and_identity(self):
        a = translation_action(0.6, WL)
        for g, h in ((1, 2), (3, -1), (-2, -2)):
            assert cocycle_norm(a, g + h, WL) <= cocycle_norm(a, g, WL) + cocycle_norm(a, h, WL) + 1e-12
            assert cocycle_identity_residual(a, g, h, XS) <= 1e-8

    def test_swap_action_parity(self):
        a = swap_action(A, B, WL)
        assert a.conservative
        assert np.allclose(a.iterate(4).forward(XS), XS)
        assert np.allclose(a.iterate(-3).forward(XS), a.generator.forward(XS))
