import math

import numpy as np
import pytest

from nspoisson.constructions import (apply_odometer, bernoulli_dissipativity, bernoulli_f,
                                     bernoulli_fourth_moment, bernoulli_norm_check, bernoulli_tail,
                                     bernoulli_total, bernoulli_variance, block_indices,
                                     build_bernoulli_example, build_propT_action, level_block_sum,
                                     log_majorant, l1_majorant, odometer_flip_enumeration,
                                     odometer_flip_probability, propT_blocks, propT_f2,
                                     propT_integrability_report, rare_probability, sample_bernoulli,
                                     sample_propT, verify_almost_invariance)
from nspoisson.dynamics import KappaMeasure
from nspoisson.errors import ArgumentError, ConstructionRejected


class TestOdometer:
    @pytest.mark.parametrize("c, g", [(0, 1), (3, 1), (3, 5), (4, -7), (6, 64), (5, 0)])
    def test_flip_probability(self, c, g):
        assert odometer_flip_probability(c, g) == odometer_flip_enumeration(c, g)

    def test_blocks_partition(self):
        idx = [j for n in range(1, 6) for j in block_indices(n)]
        assert idx == list(range(15))
        assert len(block_indices(4)) == 4

    def test_default_levels(self):
        c = build_propT_action()
        assert c.coordinate_levels == (1, 6, 13, 20, 31, 42, 55, 70, 89, 108, 129, 152)
        assert c.radii == tuple(range(1, 13))
        assert c.first_level(1) == 1 and c.first_level(-5) == 5 and c.first_level(40) == 13

    def test_naive_levels_rejected(self):
        with pytest.raises(ConstructionRejected) as info:
            build_propT_action(levels=4, coordinate_levels=(1, 2, 3, 4))
        assert (info.value.n, info.value.g) == (2, 1)

    def test_exact_bound_is_tight(self):
        # c = n² + log₂(n·G) exactly meets the bound
        verify_almost_invariance((1, 2 * 2 + 2), (1, 2))
        with pytest.raises(ConstructionRejected):
            verify_almost_invariance((1, 5), (1, 2))

    def test_bad_arguments(self):
        with pytest.raises(ArgumentError):
            build_propT_action(levels=0)
        with pytest.raises(ArgumentError):
            build_propT_action(levels=3, radii=(3, 2, 3))

    def test_action_is_a_group_action(self):
        c = build_propT_action(levels=5)
        s = sample_propT(c, 2000, 1)
        back = apply_odometer(c, apply_odometer(c, s, 3), -3)
        assert np.array_equal(back.bits, s.bits)
        assert np.allclose(back.u, s.u, atol=1e-15)
        two = apply_odometer(c, apply_odometer(c, s, 1), 1)
        assert np.array_equal(two.bits, apply_odometer(c, s, 2).bits)

    def test_flip_rate_matches(self):
        c = build_propT_action(levels=2, coordinate_levels=(1, 6), radii=(1, 2))
        s = sample_propT(c, 200000, 4)
        flips = (apply_odometer(c, s, 1).bits != s.bits).mean(axis=0)
        assert flips[0] == pytest.approx(0.5, abs=4 * math.sqrt(0.25 / 200000))
        p = 2.0 ** -6
        assert flips[1] == pytest.approx(p, abs=4 * math.sqrt(p / 200000))


class TestPropTDensity:
    def test_f2_by_hand(self):
        bits = np.zeros((2, 6), dtype=bool)
        bits[1, 1] = True  # kills B_2
        assert propT_f2(bits, 3).tolist() == [15.0, 11.0]
        assert propT_blocks(bits, 3)[1].tolist() == [True, False, True]

    def test_majorants(self):
        c = build_propT_action()
        assert l1_majorant(c, 0) == 0.0
        assert l1_majorant(c, 1) == pytest.approx(sum(2.0 ** (n - n * n) for n in range(1, 40)))
        assert log_majorant(1) == pytest.approx(8.159, abs=1e-3)
        assert log_majorant(3) > log_majorant(2) > log_majorant(1)

    def test_report(self):
        c = build_propT_action(levels=8)
        rep = propT_integrability_report(c, [1, 2, 3], 40000, 9, scales=(0.5, 2.0))
        assert max(abs(z) for z in rep.block_z()) < 4
        for r in rep.records:
            assert r.l1 <= r.l1_majorant + 4 * r.l1_se
            assert r.abs_log <= r.log_majorant + 4 * r.abs_log_se
        assert 0 < rep.entropy <= rep.kappa_bound
        (t1, h1), (t2, h2) = rep.scaled_entropy
        assert h2 / h1 == pytest.approx(t2 / t1, rel=1e-12)


class TestBernoulli:
    def test_probabilities(self):
        assert rare_probability(1) == 0.25
        assert rare_probability(3) == pytest.approx(1 / (64 * 9))

    def test_variance_values(self):
        assert bernoulli_variance(1, 2) == pytest.approx(3.0)
        assert bernoulli_variance(3, 2) == pytest.approx(4 / 9 * (1 - rare_probability(3)))
        assert bernoulli_variance(2, 0) == 0.0
        assert bernoulli_variance(2, -9) == bernoulli_variance(2, 9)

    def test_fourth_moment_by_enumeration(self):
        # Y_1 − Y_1∘T²: positions {0,1} against {2,3}, four independent bits
        k, p = 1, rare_probability(1)
        tot = 0.0
        for mask in range(16):
            b = [(mask >> i) & 1 for i in range(4)]
            prob = math.prod(p if x else 1 - p for x in b)
            tot += prob * (2 * (b[0] + b[1] - b[2] - b[3])) ** 4
        assert bernoulli_fourth_moment(k, 2) == pytest.approx(tot, rel=1e-12)

    def test_totals(self):
        assert bernoulli_total(0) == 0.0
        # untruncated series agrees with a long direct sum
        direct = sum(bernoulli_variance(k, 5) for k in range(1, 2000))
        assert bernoulli_total(5) == pytest.approx(direct + 10 / 2000, rel=1e-6)
        assert bernoulli_total(5, levels=3) == pytest.approx(sum(bernoulli_variance(k, 5) for k in (1, 2, 3)))

    def test_tail(self):
        assert bernoulli_tail(8) == pytest.approx(math.pi ** 2 / 6 - sum(1 / k ** 2 for k in range(1, 9)), abs=1e-14)
        assert build_bernoulli_example(8).base.tail_bound == bernoulli_tail(8)

    def test_needs_three_levels(self):
        with pytest.raises(ArgumentError):
            build_bernoulli_example(2)

    def test_sampling_rates(self):
        c = build_bernoulli_example(4)
        s = sample_bernoulli(c, 50000, 3, 4)
        for k in (1, 2):
            n_sites = 50000 * s.span[k]
            p = c.probs[k - 1]
            assert s.ones[k][0].size == pytest.approx(n_sites * p, abs=4 * math.sqrt(n_sites * p))

    def test_block_sum_and_f(self):
        c = build_bernoulli_example(3)
        s = sample_bernoulli(c, 10, 1, 2)
        f = bernoulli_f(s, 3, shift=1)
        assert np.allclose(f, 1 + sum(level_block_sum(s, k, 1) for k in (1, 2, 3)))
        with pytest.raises(ArgumentError):
            level_block_sum(s, 1, 3)

    def test_norm_check(self):
        c = build_bernoulli_example(6)
        rep = bernoulli_norm_check(c, 2, 100000, 7)
        assert all(abs(r.z) < 4 for r in rep.levels)
        assert abs(rep.total.z) < 4
        assert rep.total.target == pytest.approx(bernoulli_total(2, levels=6))

    def test_dissipativity(self):
        d = bernoulli_dissipativity(64)
        assert d.report.verdict == "convergent"
        assert d.lower_bound_constant == pytest.approx(2.78, abs=5e-3)
