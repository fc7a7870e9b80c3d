import math

import numpy as np
import pytest
from scipy import stats

from nspoisson.errors import ArgumentError
from nspoisson.measure import Window, exp_decay, lebesgue, weighted_line
from nspoisson.nsmap import make_translation
from nspoisson.process import (ConfigBatch, PointConfig, count, count_moments, dump_csv,
                               pushforward, pushforward_batch, renyi_void_check, sample_batch,
                               sample_config)


@pytest.fixture(scope="module")
def batch():
    return sample_batch(weighted_line(), Window(-1.0, 1.0), 20000, seed=11)


class TestSampleBatch:
    def test_counts_are_poisson(self, batch):
        c = batch.counts()
        assert c.mean() == pytest.approx(3.0, abs=4 * math.sqrt(3.0 / c.size))
        # chi-square against the Poisson(3) law on the first few cells
        k = np.arange(8)
        observed = np.array([np.sum(c == j) for j in k] + [np.sum(c >= 8)])
        probs = np.append(stats.poisson.pmf(k, 3.0), stats.poisson.sf(7, 3.0))
        assert stats.chisquare(observed, probs * c.size).pvalue > 1e-4

    def test_points_follow_normalized_intensity(self, batch):
        right = np.mean(batch.points >= 0.0)
        assert right == pytest.approx(2 / 3, abs=4 * math.sqrt(2 / 9 / batch.points.size))

    def test_uniform_on_lebesgue_window(self):
        b = sample_batch(lebesgue(), Window(2.0, 5.0), 3000, seed=3)
        assert stats.kstest((b.points - 2.0) / 3.0, "uniform").pvalue > 1e-4

    def test_sorted_and_simple(self, batch):
        same = batch.trial[1:] == batch.trial[:-1]
        assert np.all(np.diff(batch.points)[same] > 0)
        assert np.all(np.diff(batch.trial) >= 0)

    def test_reproducible(self):
        a = sample_batch(exp_decay(), Window(0, 2), 500, seed=5)
        b = sample_batch(exp_decay(), Window(0, 2), 500, seed=5)
        c = sample_batch(exp_decay(), Window(0, 2), 500, seed=6)
        assert np.array_equal(a.points, b.points) and np.array_equal(a.trial, b.trial)
        assert not np.array_equal(a.points, c.points)

    def test_blocks_are_prefix_stable(self):
        # the first block is drawn from its own stream, so it does not depend on the trial total
        a = sample_batch(lebesgue(), Window(0, 1), 100, seed=9, block_trials=64)
        b = sample_batch(lebesgue(), Window(0, 1), 200, seed=9, block_trials=64)
        k = np.searchsorted(a.trial, 64)
        assert np.array_equal(a.points[:k], b.points[:k])

    def test_rejects_bad_arguments(self):
        with pytest.raises(ArgumentError):
            sample_batch(lebesgue(), Window(0, 1), 0, seed=1)


class TestConfigurations:
    def test_single_config_and_count(self):
        rng = np.random.default_rng(0)
        omega = sample_config(lebesgue(), Window(0, 10), rng)
        assert count(omega, Window(0, 10)) == len(omega)
        assert count(omega, Window(0, 5)) + count(omega, Window(5, 10)) == len(omega)
        with pytest.raises(ArgumentError):
            count(omega, Window(-1, 1))

    def test_points_must_lie_in_window(self):
        with pytest.raises(ArgumentError):
            PointConfig(np.array([0.5, 2.0]), Window(0, 1))

    def test_batch_config_roundtrip(self, batch):
        cfgs = batch.configs()
        assert len(cfgs) == batch.n_trials
        assert sum(len(c) for c in cfgs) == batch.points.size
        assert np.array_equal(batch.config(7).points, cfgs[7].points)

    def test_pushforward_translation(self):
        omega = PointConfig(np.array([0.1, 0.7]), Window(0, 1))
        moved = pushforward(omega, make_translation(2.0))
        assert moved.window == Window(2.0, 3.0)
        assert np.allclose(moved.points, [2.1, 2.7])

    def test_pushforward_batch_preserves_counts(self, batch):
        moved = pushforward_batch(batch, make_translation(-0.5))
        assert np.array_equal(moved.counts(), batch.counts())


class TestReports:
    def test_renyi_void_check(self):
        rep = renyi_void_check(weighted_line(), [Window(-1, 0), Window(0, 0.5), Window(1, 2)], 20000, 4)
        assert rep.passed
        assert len(rep.joints) == 3

    def test_count_moments_exact(self):
        cm = count_moments(np.array([0, 1, 2, 3]), 1.5)
        assert cm.mean == 1.5
        assert cm.var == pytest.approx(np.var([0, 1, 2, 3], ddof=1))
        assert cm.void == 0.25

    def test_dump_csv(self, tmp_path):
        b = ConfigBatch(np.array([0.2, 0.4, 0.9]), np.array([0, 0, 2]), 3, Window(0, 1))
        path = tmp_path / "pts.csv"
        dump_csv(b, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "trial_id,point"
        assert len(lines) == 4
