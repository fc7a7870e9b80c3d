"""Radon–Nikodym derivatives of Poisson suspensions and stochastic integrals.

For ν = φμ the derivative dν*/dμ* is Exp(φ − 1).  Besides the extended
coherent vector, it is evaluated as an ε-truncated logarithmic limit and, on
Aut₁, as an infinite product; Monte Carlo tests confirm the identification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .coherent import (MCEstimate, TestFunction, exp_eval_batch, log_exp_batch,
                       log_extended_batch, mean_and_se)
from .errors import ArgumentError, NumericFailure, PreconditionError
from .measure import (BaseMeasure, Schedule, Window, hull_of, integrate_schedule,
                      level_set_points)
from .nsmap import NsMap, aut1_deficiency, aut2_deficiency, chi
from .process import ConfigBatch, PointConfig, sample_batch

DEFAULT_EPS = tuple(2.0 ** -k for k in range(1, 21))
DEEP_EPS = tuple(2.0 ** -k for k in range(1, 46))
QUAD_TOL = 1e-13


@dataclass(frozen=True, eq=False)
class DensityRatio:
    """φ = dν/dμ, equal to 1 outside ``support``.

    The support window covers every region X_ε = {|log φ| > ε}, so one sample
    on it serves all ε (coupled by filtering).
    """

    phi: Callable[[np.ndarray], np.ndarray]
    support: Window
    breakpoints: tuple[float, ...] = ()
    label: str = ""

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape)
        inside = self.support.contains(x)
        if inside.any():
            out[inside] = self.phi(x[inside])
        return out

    def log(self, x) -> np.ndarray:
        return np.log(self(x))

    @classmethod
    def from_map(cls, T: NsMap) -> "DensityRatio":
        if T.rn_window is None:
            raise ArgumentError("the map needs a bounded RN support")
        return cls(T.rn, T.rn_window, T.breakpoints, label=f"T'({T.label})")

    def minus_one(self) -> TestFunction:
        return TestFunction(lambda x: self(x) - 1.0, self.support, self.breakpoints,
                            label=f"{self.label}-1")

    def sqrt_minus_one(self) -> TestFunction:
        return TestFunction(lambda x: np.sqrt(self(x)) - 1.0, self.support, self.breakpoints,
                            label=f"sqrt({self.label})-1")

    def log_function(self) -> TestFunction:
        return TestFunction(self.log, self.support, self.breakpoints, label=f"log {self.label}")

    def nu(self, m: BaseMeasure) -> BaseMeasure:
        return m.reweighted(self.phi, self.support, self.breakpoints, label=f"{self.label}·μ")

    def level_points(self, levels: Sequence[float]) -> tuple[float, ...]:
        """Breakpoints plus crossings of |log φ| through ``levels``."""
        w = self.support
        pts = level_set_points(lambda x: np.abs(self.log(x)), w.lo, w.hi, levels)
        return tuple(sorted({*self.breakpoints, *pts}))

    def aut2_norm_sq(self, m: BaseMeasure) -> float:
        return m.integrate(lambda x: (np.sqrt(self(x)) - 1.0) ** 2, self.support, tol=QUAD_TOL,
                           breakpoints=self.breakpoints)


def constant_ratio(w: Window, value: float) -> DensityRatio:
    return DensityRatio(lambda x: np.full(np.shape(x), float(value)), w, label=f"{value:g}·1{w.as_tuple()}")


# -- product form on Aut₁ -----------------------------------------------------

def log_rn_suspension_batch(T: NsMap, batch: ConfigBatch, m: BaseMeasure) -> np.ndarray:
    """log (T_*)′(ω) = −χ(T) + Σ_{x∈ω} log T′(x) per trial (T ∈ Aut₁)."""
    if T.measure_preserving:
        return np.zeros(batch.n_trials)
    if not math.isfinite(aut1_deficiency(T, m)):
        raise PreconditionError("the product form needs T in Aut1 (‖T′−1‖₁ diverges)", norm="aut1")
    w = T.rn_window
    if not batch.window.covers(w):
        raise ArgumentError("configurations must cover the RN support of T")
    mask = w.contains(batch.points)
    return batch.per_trial_sum(_masked_log(T.rn, batch, mask)) - chi(T, m)


def _masked_log(fn, batch: ConfigBatch, mask) -> np.ndarray:
    vals = np.zeros(batch.points.size)
    vals[mask] = np.log(fn(batch.points[mask]))
    return vals


def rn_suspension(T: NsMap, omega: PointConfig, m: BaseMeasure) -> float:
    """(T_*)′(ω) = e^{−χ(T)} ∏_{x∈ω} T′(x)."""
    batch = ConfigBatch(omega.points, np.zeros(len(omega), dtype=np.int64), 1, omega.window)
    return float(np.exp(log_rn_suspension_batch(T, batch, m)[0]))


def log_rn_product_batch(d: DensityRatio, batch: ConfigBatch, m: BaseMeasure) -> np.ndarray:
    """Σ log φ(x) − ∫(φ − 1)dμ: the product form for a ratio with φ − 1 ∈ L¹."""
    f = d.minus_one()
    return batch.per_trial_sum(_masked_log(d, batch, d.support.contains(batch.points))) \
        - f.integral(m)


def log_rn_extended_batch(d: DensityRatio, batch: ConfigBatch, m: BaseMeasure) -> np.ndarray:
    """log Exp((√φ−1)•(√φ−1)) = log of the extended coherent vector."""
    g = d.sqrt_minus_one()
    sign, logs = log_extended_batch(g, g, batch, m)
    if np.any(sign < 0):
        raise NumericFailure("extended coherent value for φ > 0 came out negative")
    return logs


# -- ε-truncated limits ------------------------------------------------------------

@dataclass(frozen=True)
class LimitEstimate:
    """Per-trial limit values with the last increment as error estimate."""

    value: np.ndarray
    increment: np.ndarray
    partials: np.ndarray  # (len(eps), n_trials)
    eps: tuple[float, ...]


def _stabilize(partials: np.ndarray, eps, tol: float) -> LimitEstimate:
    if partials.shape[0] < 4:
        raise ArgumentError("an ε schedule needs at least four levels")
    inc = np.abs(np.diff(partials, axis=0))
    tail = inc[-3:]
    ok = np.all(tail < tol, axis=0)
    if not ok.all():
        bad = int(np.argmin(ok))
        raise NumericFailure(f"ε-limit did not stabilize to {tol:g} (trial {bad})",
                             residual=inc[:, bad].tolist())
    return LimitEstimate(partials[-1], inc[-1], partials, tuple(eps))


def _check_schedule(eps) -> tuple[float, ...]:
    eps = tuple(float(e) for e in eps)
    if any(b >= a for a, b in zip(eps, eps[1:])) or eps[-1] <= 0:
        raise ArgumentError("ε schedule must be positive and strictly decreasing")
    return eps


def _truncated_sums(values: np.ndarray, keys: np.ndarray, batch: ConfigBatch, eps) -> np.ndarray:
    """Row k: per-trial Σ values over points with keys > eps[k]."""
    out = np.empty((len(eps), batch.n_trials))
    for k, e in enumerate(eps):
        sel = keys > e
        out[k] = np.bincount(batch.trial[sel], weights=values[sel], minlength=batch.n_trials)
    return out


def stochastic_integral_batch(f: TestFunction, batch: ConfigBatch, m: BaseMeasure,
                              eps=DEFAULT_EPS, tol: float = 1e-9) -> LimitEstimate:
    """I_μ(f) = lim_ε (∫_{|f|>ε} f dω − ∫_{|f|>ε} f 1_{|f|≤1} dμ) per trial."""
    eps = _check_schedule(eps)
    if f.is_complex:
        raise ArgumentError("stochastic integrals are for real f")
    if not batch.window.covers(f.support):
        raise ArgumentError("configurations must be sampled on the support of f")
    w = f.support
    absf = lambda x: np.abs(f(x))
    mask = w.contains(batch.points)
    vals = np.zeros(batch.points.size)
    vals[mask] = f(batch.points[mask])
    sums = _truncated_sums(vals, np.abs(vals), batch, eps)
    comp = np.empty(len(eps))
    one_pts = level_set_points(absf, w.lo, w.hi, (1.0,))
    for k, e in enumerate(eps):
        bps = sorted({*f.breakpoints, *one_pts, *level_set_points(absf, w.lo, w.hi, (e,))})
        comp[k] = m.integrate(lambda x: np.where((absf(x) > e) & (absf(x) <= 1.0), f(x), 0.0), w,
                              tol=QUAD_TOL, breakpoints=bps)
    return _stabilize(sums - comp[:, None], eps, tol)


def stochastic_integral(f: TestFunction, omega: PointConfig, m: BaseMeasure, eps=DEFAULT_EPS,
                        tol: float = 1e-9) -> tuple[float, float]:
    """(value, last increment) for one configuration."""
    batch = ConfigBatch(omega.points, np.zeros(len(omega), dtype=np.int64), 1, omega.window)
    est = stochastic_integral_batch(f, batch, m, eps, tol)
    return float(est.value[0]), float(est.increment[0])


def log_rn_limit_batch(d: DensityRatio, batch: ConfigBatch, m: BaseMeasure, eps=DEFAULT_EPS,
                       tol: float = 1e-9) -> LimitEstimate:
    """lim_ε (∫_{X_ε} log φ dω − ∫_{X_ε}(φ − 1)dμ), X_ε = {|log φ| > ε}, per trial."""
    eps = _check_schedule(eps)
    if not batch.window.covers(d.support):
        raise ArgumentError("configurations must be sampled on the support of φ")
    w = d.support
    mask = w.contains(batch.points)
    logs = np.zeros(batch.points.size)
    logs[mask] = d.log(batch.points[mask])
    sums = _truncated_sums(logs, np.abs(logs), batch, eps)
    abslog = lambda x: np.abs(d.log(x))
    comp = np.empty(len(eps))
    for k, e in enumerate(eps):
        bps = sorted({*d.breakpoints, *level_set_points(abslog, w.lo, w.hi, (e,))})
        comp[k] = m.integrate(lambda x: np.where(abslog(x) > e, d(x) - 1.0, 0.0), w,
                              tol=QUAD_TOL, breakpoints=bps)
    return _stabilize(sums - comp[:, None], eps, tol)


def log_rn_limit(d: DensityRatio, omega: PointConfig, m: BaseMeasure, eps=DEFAULT_EPS,
                 tol: float = 1e-9) -> tuple[float, float]:
    batch = ConfigBatch(omega.points, np.zeros(len(omega), dtype=np.int64), 1, omega.window)
    est = log_rn_limit_batch(d, batch, m, eps, tol)
    return float(est.value[0]), float(est.increment[0])


def beta(d: DensityRatio, m: BaseMeasure) -> float:
    """β = −∫(φ − 1 − log φ·1_{X₁ᶜ})dμ through the split integrand.

    (√φ−1)² + 2(√φ−1−log√φ)1_{X₁ᶜ} + 2(√φ−1)1_{X₁}: each term is integrable on
    its own whenever √φ − 1 ∈ L².
    """
    def integrand(x):
        p = d(x)
        r = np.sqrt(p) - 1.0
        small = np.abs(np.log(p)) <= 1.0
        return r * r + np.where(small, 2.0 * (r - 0.5 * np.log(p)), 2.0 * r)

    return -m.integrate(integrand, d.support, tol=QUAD_TOL, breakpoints=d.level_points((1.0,)))


def expected_log_rn(d: DensityRatio, m: BaseMeasure, schedule: Schedule | None = None) -> float:
    """E[log dν*/dμ*] = −∫(φ − 1 − log φ)dμ ∈ [−∞, 0]."""
    h = lambda x: d(x) - 1.0 - np.log(d(x))
    if schedule is None:
        return -m.integrate(h, d.support, tol=QUAD_TOL, breakpoints=d.breakpoints)
    res = integrate_schedule(m, h, schedule, breakpoints=d.breakpoints)
    return -res.value


# -- Monte Carlo identification ----------------------------------------------------------

@dataclass(frozen=True)
class ConsistencyRecord:
    name: str
    window: tuple[float, float] | None
    estimate: float
    se: float
    target: float

    @property
    def z(self) -> float:
        return MCEstimate(self.estimate, self.se, self.target).z

    @property
    def passed(self) -> bool:
        return self.z <= 4.0


def rn_consistency_test(d: DensityRatio, windows: Sequence[Window], trials: int, seed: int,
                        m: BaseMeasure) -> list[ConsistencyRecord]:
    """Checks that Exp(φ − 1) reweights μ* into ν*.

    Per window A: E_μ*[Exp(φ−1) 1_{N_A=0}] = e^{−ν(A)} and E_μ*[Exp(φ−1) N_A] = ν(A),
    plus the same void probability and mean count under direct ν* sampling,
    and the normalization E_μ*[Exp(φ−1)] = 1.
    """
    region = hull_of([d.support, *windows])
    nu = d.nu(m)
    batch = sample_batch(m, region, trials, seed)
    weight = exp_eval_batch(d.minus_one(), batch, m)
    direct = sample_batch(nu, region, trials, seed + 1)
    recs = [ConsistencyRecord("normalization", None, *mean_and_se(weight), 1.0)]
    for w in windows:
        nu_a = nu.mass(w)
        counts = batch.counts(w)
        void = math.exp(-nu_a)
        recs.append(ConsistencyRecord("reweighted_void", w.as_tuple(),
                                      *mean_and_se(weight * (counts == 0)), void))
        direct_void = (direct.counts(w) == 0).astype(float)
        se = math.sqrt(void * (1 - void) / trials)
        recs.append(ConsistencyRecord("direct_void", w.as_tuple(), float(direct_void.mean()), se, void))
        recs.append(ConsistencyRecord("reweighted_count", w.as_tuple(),
                                      *mean_and_se(weight * counts), nu_a))
        recs.append(ConsistencyRecord("direct_count", w.as_tuple(),
                                      float(direct.counts(w).mean()), math.sqrt(nu_a / trials), nu_a))
    return recs
