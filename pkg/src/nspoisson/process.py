"""Poisson configurations on finite-mass windows and counting functionals."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ArgumentError, NumericFailure
from .measure import BaseMeasure, Window, hull_of

DUPLICATE_GAP = 1e-15
MAX_RESAMPLES = 10
BLOCK_TRIALS = 8192


@dataclass(frozen=True)
class SeedTag:
    """Where a configuration's randomness came from."""

    seed: int | None
    block: int | None = None
    label: str = ""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PointConfig:
    """A finite simple configuration: sorted points inside ``window``."""

    points: np.ndarray
    window: Window
    seed_tag: SeedTag | None = None

    def __post_init__(self):
        pts = np.sort(np.asarray(self.points, dtype=float).ravel())
        if pts.size and not np.all(self.window.contains(pts)):
            raise ArgumentError("configuration points must lie in the window")
        object.__setattr__(self, "points", _frozen(pts))

    def __len__(self) -> int:
        return int(self.points.size)

    def restrict(self, w: Window) -> "PointConfig":
        if not self.window.covers(w):
            raise ArgumentError("restriction window exceeds the observed window")
        return PointConfig(self.points[w.contains(self.points)], w, self.seed_tag)


@dataclass(frozen=True, eq=False)
class ConfigBatch:
    """Many configurations on a common window, stored flat.

    ``points`` holds all points sorted within each trial; ``trial`` gives the
    owning trial for each point.  This is the vectorized counterpart of a list
    of :class:`PointConfig`.
    """

    points: np.ndarray
    trial: np.ndarray
    n_trials: int
    window: Window
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points))
        tr = np.asarray(self.trial, dtype=np.int64)
        tr.setflags(write=False)
        object.__setattr__(self, "trial", tr)

    def counts(self, w: Window | None = None) -> np.ndarray:
        if w is None:
            return np.bincount(self.trial, minlength=self.n_trials)
        if not self.window.covers(w):
            raise ArgumentError("count window is not contained in the sampled window")
        mask = w.contains(self.points)
        return np.bincount(self.trial[mask], minlength=self.n_trials)

    def per_trial_sum(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values)
        if np.iscomplexobj(values):
            return (np.bincount(self.trial, weights=values.real, minlength=self.n_trials)
                    + 1j * np.bincount(self.trial, weights=values.imag, minlength=self.n_trials))
        return np.bincount(self.trial, weights=values, minlength=self.n_trials)

    def select(self, mask: np.ndarray) -> "ConfigBatch":
        """Keep the points where ``mask`` holds (coupled filtering across trials)."""
        return ConfigBatch(self.points[mask], self.trial[mask], self.n_trials, self.window, self.seed)

    def restrict(self, w: Window) -> "ConfigBatch":
        if not self.window.covers(w):
            raise ArgumentError("restriction window exceeds the observed window")
        b = self.select(w.contains(self.points))
        return ConfigBatch(b.points, b.trial, b.n_trials, w, self.seed)

    def config(self, i: int) -> PointConfig:
        lo, hi = np.searchsorted(self.trial, [i, i + 1])
        return PointConfig(self.points[lo:hi], self.window, SeedTag(self.seed, None, f"trial {i}"))

    def configs(self) -> list[PointConfig]:
        bounds = np.searchsorted(self.trial, np.arange(self.n_trials + 1))
        tag = SeedTag(self.seed)
        return [PointConfig(self.points[bounds[i]:bounds[i + 1]], self.window, tag)
                for i in range(self.n_trials)]


def _window_mass(m: BaseMeasure, w: Window) -> float:
    total = m.mass(w)
    if not math.isfinite(total):
        raise ArgumentError(f"window {w.as_tuple()} has infinite mass")
    return total


def _draw_points(m: BaseMeasure, w: Window, total: float, n: int, rng) -> np.ndarray:
    return m.quantile(w, rng.random(n)) if n else np.empty(0)


def _has_duplicates(sorted_pts: np.ndarray, same_trial: np.ndarray | None = None) -> np.ndarray:
    gaps = np.diff(sorted_pts) < DUPLICATE_GAP
    if same_trial is not None:
        gaps &= same_trial
    return gaps


def sample_config(m: BaseMeasure, w: Window, rng: np.random.Generator,
                  seed_tag: SeedTag | None = None) -> PointConfig:
    """One Poisson configuration with intensity ``m`` on ``w``.

    The count is Poisson(mass) and, given the count, points are iid from the
    normalized restriction, drawn by inverse CDF.
    """
    total = _window_mass(m, w)
    if total == 0:
        return PointConfig(np.empty(0), w, seed_tag)
    n = int(rng.poisson(total))
    for _ in range(MAX_RESAMPLES):
        pts = np.sort(_draw_points(m, w, total, n, rng))
        if not _has_duplicates(pts).any():
            return PointConfig(pts, w, seed_tag)
    raise NumericFailure("configuration kept producing duplicate points", residual=MAX_RESAMPLES)


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Independent stream for a block of trials, derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(block),)))


def sample_batch(m: BaseMeasure, w: Window, trials: int, seed: int,
                 block_trials: int = BLOCK_TRIALS) -> ConfigBatch:
    """``trials`` independent configurations on ``w``, reproducible from ``seed``.

    Trials are grouped in fixed-size blocks; block ``b`` draws from the stream
    ``SeedSequence(seed, spawn_key=(b,))`` so results do not depend on how the
    work is scheduled.
    """
    if trials < 1:
        raise ArgumentError("trials must be positive")
    total = _window_mass(m, w)
    pts_parts, tr_parts = [], []
    for b, start in enumerate(range(0, trials, block_trials)):
        size = min(block_trials, trials - start)
        rng = block_rng(seed, b)
        counts = rng.poisson(total, size=size) if total > 0 else np.zeros(size, dtype=np.int64)
        trial = np.repeat(np.arange(start, start + size), counts)
        pts = _draw_points(m, w, total, int(counts.sum()), rng)
        for _ in range(MAX_RESAMPLES + 1):
            order = np.lexsort((pts, trial))
            pts, trial = pts[order], trial[order]
            dup = _has_duplicates(pts, trial[1:] == trial[:-1])
            if not dup.any():
                break
            idx = np.nonzero(dup)[0] + 1
            pts = pts.copy()
            pts[idx] = _draw_points(m, w, total, idx.size, rng)
        else:
            raise NumericFailure("batch kept producing duplicate points", residual=MAX_RESAMPLES)
        pts_parts.append(pts)
        tr_parts.append(trial)
    return ConfigBatch(np.concatenate(pts_parts), np.concatenate(tr_parts), trials, w, seed)


def count(omega: PointConfig, a: Window) -> int:
    """Number of points of ``omega`` in ``a`` (half-open)."""
    if not omega.window.covers(a):
        raise ArgumentError(f"window {a.as_tuple()} is outside the observed window "
                            f"{omega.window.as_tuple()}")
    return int(np.count_nonzero(a.contains(omega.points)))


def pushforward(omega: PointConfig, T) -> PointConfig:
    """The configuration {T x : x in omega} on the image window of ``omega.window``."""
    image = T.image(omega.window)
    pts = np.asarray(T.forward(omega.points), dtype=float) if len(omega) else np.empty(0)
    pts = np.clip(pts, image.lo, np.nextafter(image.hi, -math.inf))
    return PointConfig(pts, image, omega.seed_tag)


def pushforward_batch(batch: ConfigBatch, T) -> ConfigBatch:
    image = T.image(batch.window)
    pts = np.asarray(T.forward(batch.points), dtype=float) if batch.points.size else np.empty(0)
    pts = np.clip(pts, image.lo, np.nextafter(image.hi, -math.inf))
    order = np.lexsort((pts, batch.trial))
    return ConfigBatch(pts[order], batch.trial[order], batch.n_trials, image, batch.seed)


@dataclass(frozen=True)
class VoidRecord:
    window: tuple[float, float]
    empirical: float
    target: float
    se: float
    z: float

    @property
    def passed(self) -> bool:
        return abs(self.z) <= 4.0


@dataclass(frozen=True)
class VoidReport:
    singles: tuple[VoidRecord, ...]
    joints: tuple[VoidRecord, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.singles + self.joints)


def _proportion_record(window, hits: np.ndarray, p: float) -> VoidRecord:
    n = hits.size
    est = float(hits.mean())
    se = math.sqrt(max(p * (1.0 - p), 1e-300) / n)
    z = (est - p) / se if p * (1 - p) > 0 else (0.0 if est == p else math.inf)
    return VoidRecord(window, est, p, se, z)


def renyi_void_check(m: BaseMeasure, windows: Sequence[Window], trials: int, seed: int) -> VoidReport:
    """Void probabilities P(N_A = 0) against exp(-mass), plus joint voids of disjoint pairs.

    All windows are observed on one coupled sample over their hull, so joint
    events are computed from the same configurations.
    """
    hull = hull_of(windows)
    batch = sample_batch(m, hull, trials, seed)
    empties = {w: batch.counts(w) == 0 for w in windows}
    singles = tuple(_proportion_record(w.as_tuple(), empties[w], math.exp(-m.mass(w)))
                    for w in windows)
    joints = []
    for i, a in enumerate(windows):
        for b in windows[i + 1:]:
            if a.disjoint(b):
                p = math.exp(-m.mass(a) - m.mass(b))
                joints.append(_proportion_record((a.lo, a.hi, b.lo, b.hi), empties[a] & empties[b], p))
    return VoidReport(singles, tuple(joints))


@dataclass(frozen=True)
class CountMoments:
    mass: float
    mean: float
    mean_se: float
    var: float
    var_se: float
    void: float
    void_se: float

    @property
    def z_mean(self) -> float:
        return (self.mean - self.mass) / self.mean_se

    @property
    def z_var(self) -> float:
        return (self.var - self.mass) / self.var_se

    @property
    def z_void(self) -> float:
        return (self.void - math.exp(-self.mass)) / self.void_se


def count_moments(counts: np.ndarray, target_mass: float) -> CountMoments:
    """Moments and void frequency of counts, each with a standard error.

    The variance SE uses the empirical fourth central moment.
    """
    c = np.asarray(counts, dtype=float)
    n = c.size
    mean = c.mean()
    dev = c - mean
    var = float(dev @ dev / (n - 1))
    m4 = float(np.mean(dev ** 4))
    var_se = math.sqrt(max(m4 - var * var, 1e-300) / n)
    p = math.exp(-target_mass)
    void = float(np.mean(c == 0))
    return CountMoments(target_mass, float(mean), math.sqrt(var / n), var, var_se,
                        void, math.sqrt(p * (1 - p) / n))


def dump_csv(batch: ConfigBatch, path) -> None:
    """Write (trial_id, point) rows for external plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial_id", "point"])
        for t, x in zip(batch.trial.tolist(), batch.points.tolist()):
            writer.writerow([t, repr(x)])
