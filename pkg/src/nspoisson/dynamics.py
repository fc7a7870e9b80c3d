"""Diagnostics for Z-actions built on the cocycle c(g) = √T_g′ − 1 and the Furstenberg entropy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .coherent import MCEstimate, mean_and_se
from .errors import ArgumentError, PreconditionError
from .measure import BaseMeasure, Schedule, Window, hull_of
from .nsmap import ActionZ, NsMap, _rn_integral, aut1_deficiency, chi, cocycle_norm
from .process import sample_batch
from .suspension import log_rn_suspension_batch

SUMMABLE_TAIL = 1e-12
RATIO_MARGIN = 1e-3
POWER_MARGIN = 0.5


@dataclass(frozen=True)
class KappaMeasure:
    """A finitely supported probability on Z."""

    support: tuple[int, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        sup = tuple(int(g) for g in self.support)
        w = tuple(float(x) for x in self.weights)
        if len(sup) != len(w) or not sup:
            raise ArgumentError("kappa needs one positive weight per support point")
        if len(set(sup)) != len(sup):
            raise ArgumentError("kappa support points must be distinct")
        if any(x <= 0 for x in w) or abs(sum(w) - 1.0) > 1e-12:
            raise ArgumentError("kappa weights must be positive and sum to 1")
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "weights", w)

    @property
    def symmetric(self) -> bool:
        table = dict(zip(self.support, self.weights))
        return all(abs(table.get(-g, 0.0) - w) <= 1e-12 for g, w in table.items())

    def items(self):
        return zip(self.support, self.weights)

    @classmethod
    def delta(cls, g: int = 1) -> "KappaMeasure":
        return cls((g,), (1.0,))

    @classmethod
    def symmetric_pm(cls, g: int = 1) -> "KappaMeasure":
        return cls((g, -g), (0.5, 0.5))


# -- entropy -------------------------------------------------------------------

def _entropy_integrand(r):
    return r - 1.0 - np.log(r)


def entropy(a: ActionZ, k: KappaMeasure, m: BaseMeasure, schedule: Schedule | None = None) -> float:
    """h_κ = Σ_g κ(g) ∫(T_g′ − 1 − log T_g′)dμ ≥ 0; ``inf`` on divergence."""
    total = 0.0
    for g, w in k.items():
        res = _rn_integral(a.iterate(g), m, _entropy_integrand, schedule, 1e-12)
        if not res.finite:
            return math.inf
        total += w * res.value
    return total


def entropy_aut1_form(a: ActionZ, k: KappaMeasure, m: BaseMeasure, schedule: Schedule | None = None,
                      simplified: bool = False) -> float:
    """Σ_g κ(g)(χ(T_g) − ∫ log T_g′ dμ) on Aut₁.

    With ``simplified`` the χ terms are dropped, which requires κ symmetric or
    a generator declared conservative.
    """
    if simplified and not (k.symmetric or a.conservative):
        raise PreconditionError("the simplified form needs a symmetric kappa or a conservative action")
    total = 0.0
    for g, w in k.items():
        T = a.iterate(g)
        if not math.isfinite(aut1_deficiency(T, m, schedule)):
            raise PreconditionError(f"T_{g} is not in Aut1", norm="aut1")
        log_int = _rn_integral(T, m, np.log, schedule, 1e-12).value
        total += w * (-log_int if simplified else chi(T, m, schedule) - log_int)
    return total


def kappa_chi_sum(a: ActionZ, k: KappaMeasure, m: BaseMeasure, schedule: Schedule | None = None) -> float:
    """Σ κ(g) χ(T_g); zero for symmetric κ since χ is a homomorphism."""
    return sum(w * chi(a.iterate(g), m, schedule) for g, w in k.items())


# -- dissipativity and zero type ----------------------------------------------------

@dataclass(frozen=True)
class DissipativityReport:
    g: tuple[int, ...]
    norms_sq: tuple[float, ...]
    terms: tuple[float, ...]
    partial_sums: tuple[float, ...]  # over |g| ≤ n for n = 0, 1, ...
    verdict: str  # "summable", "convergent", "divergent" or "inconclusive"
    tail_bound: float = math.inf  # geometric bound on the omitted tail

    @property
    def monotone(self) -> bool:
        return all(b >= a for a, b in zip(self.partial_sums, self.partial_sums[1:]))


def dissipativity_from_norms(g_values: Sequence[int], norms_sq: Sequence[float],
                             tail_tol: float = SUMMABLE_TAIL) -> DissipativityReport:
    """Partial sums of Σ e^{−½‖c(g)‖²} over growing |g|.

    "summable": the last increment is below ``tail_tol``.  "convergent": the
    increments are nonincreasing and their successive ratios over the second
    half of the range stay below ``1 − RATIO_MARGIN``; the tail is then bounded
    by inc·r/(1 − r).  A ratio test alone accepts slowly decaying sequences
    such as 1/r on a finite range, so the doubling exponent
    log₂(inc(R/2)/inc(R)) must also exceed ``1 + POWER_MARGIN``.  "divergent":
    the increments stop decreasing.  Otherwise "inconclusive".
    """
    g_values = [int(g) for g in g_values]
    terms = [math.exp(-0.5 * n) for n in norms_sq]
    radius = max(abs(g) for g in g_values)
    by_r = [0.0] * (radius + 1)
    for g, t in zip(g_values, terms):
        by_r[abs(g)] += t
    partial = np.cumsum(by_r).tolist()
    inc = by_r[1:]
    tail = math.inf
    half = inc[len(inc) // 2:]
    ratios = [y / x for x, y in zip(half, half[1:]) if x > 0]
    doubling = _doubling_exponent(inc)
    if inc and inc[-1] < tail_tol:
        verdict = "summable"
        r = max(ratios) if ratios else 0.0
        tail = inc[-1] * r / (1 - r) if r < 1 else inc[-1]
    elif (len(ratios) >= 2 and all(y <= x for x, y in zip(inc, inc[1:]))
          and max(ratios) < 1 - RATIO_MARGIN and doubling > 1 + POWER_MARGIN):
        verdict = "convergent"
        r = max(ratios)
        tail = inc[-1] * r / (1 - r)
    elif len(inc) >= 2 and inc[-1] >= inc[0] * (1 - 1e-12):
        verdict = "divergent"
    else:
        verdict = "inconclusive"
    return DissipativityReport(tuple(g_values), tuple(float(n) for n in norms_sq), tuple(terms),
                               tuple(partial), verdict, tail)


def _doubling_exponent(inc: Sequence[float]) -> float:
    """log₂(inc(R/2)/inc(R)) for the last radius R; ``inf`` once the terms vanish."""
    if len(inc) < 2:
        return 0.0
    a, b = inc[len(inc) // 2 - 1], inc[-1]
    if b <= 0:
        return math.inf
    return math.log2(a / b) if a > 0 else 0.0


def dissipativity_score(a: ActionZ, g_range: Iterable[int], m: BaseMeasure,
                        schedule: Schedule | None = None) -> DissipativityReport:
    gs = list(g_range)
    return dissipativity_from_norms(gs, [cocycle_norm(a, g, m, schedule) ** 2 for g in gs])


@dataclass(frozen=True)
class ZeroTypeProfile:
    g: tuple[int, ...]
    norms: tuple[float, ...]
    envelope: tuple[float, ...]  # min of the norm over |h| ≥ |g|

    @property
    def bounded(self) -> bool:
        return max(self.norms) < 1e3


def zero_type_profile(a: ActionZ, g_range: Iterable[int], m: BaseMeasure,
                      schedule: Schedule | None = None) -> ZeroTypeProfile:
    gs = sorted(set(int(g) for g in g_range), key=lambda g: (abs(g), g))
    norms = [cocycle_norm(a, g, m, schedule) for g in gs]
    env = []
    for g in gs:
        env.append(min(n for h, n in zip(gs, norms) if abs(h) >= abs(g)))
    return ZeroTypeProfile(tuple(gs), tuple(norms), tuple(env))


def koopman_overlap_mc(a: ActionZ, g: int, m: BaseMeasure, window: Window, trials: int,
                       seed: int) -> MCEstimate:
    """MC mean of √((T_g)_*′) against e^{−½‖c(g)‖²}."""
    T = a.iterate(g)
    batch = sample_batch(m, window, trials, seed)
    vals = np.exp(0.5 * log_rn_suspension_batch(T, batch, m))
    est, se = mean_and_se(vals)
    return MCEstimate(est, se, math.exp(-0.5 * cocycle_norm(a, g, m) ** 2))


# -- stationarity ---------------------------------------------------------------------

@dataclass(frozen=True)
class StationarityRecord:
    window: tuple[float, float]
    mass: float
    mixed_mass: float  # Σ κ(g) μ(T_g A)
    void: float  # e^{−μ(A)}
    mixed_void: float  # Σ κ(g) e^{−μ(T_g A)}
    mc_mixed_void: float
    mc_se: float

    @property
    def defect(self) -> float:
        return abs(self.mixed_mass - self.mass)

    @property
    def jensen_gap(self) -> float:
        """Σκ(g)e^{−μ(T_gA)} − e^{−Σκ(g)μ(T_gA)} ≥ 0."""
        return self.mixed_void - math.exp(-self.mixed_mass)

    @property
    def void_gap(self) -> float:
        """Σκ(g)e^{−μ(T_gA)} − e^{−μ(A)}; nonzero witnesses that μ* is not stationary."""
        return self.mixed_void - self.void

    @property
    def z(self) -> float:
        return (self.mc_mixed_void - self.mixed_void) / self.mc_se if self.mc_se > 0 else 0.0


@dataclass(frozen=True)
class StationarityReport:
    records: tuple[StationarityRecord, ...]

    @property
    def defect(self) -> float:
        return max(r.defect for r in self.records)


def _image_mass(T: NsMap, m: BaseMeasure, w: Window) -> float:
    return sum(m.mass(p) for p in T.parts_of_image(w))


def stationarity_defect(a: ActionZ, k: KappaMeasure, m: BaseMeasure, windows: Sequence[Window],
                        trials: int, seed: int) -> StationarityReport:
    """max_A |Σκ(g)μ(T_g A) − μ(A)| with void-probability witnesses.

    The MC column estimates Σκ(g)P(N_{T_g A} = 0) from μ* samples, one coupled
    sample per window covering every image T_g A.
    """
    recs = []
    for i, w in enumerate(windows):
        images = {g: a.iterate(g).parts_of_image(w) for g, _ in k.items()}
        masses = {g: sum(m.mass(p) for p in parts) for g, parts in images.items()}
        hull = hull_of([p for parts in images.values() for p in parts])
        batch = sample_batch(m, hull, trials, seed + i)
        mix = np.zeros(trials)
        for g, wt in k.items():
            empty = np.ones(trials, dtype=bool)
            for p in images[g]:
                empty &= batch.counts(p) == 0
            mix += wt * empty
        est, se = mean_and_se(mix)
        recs.append(StationarityRecord(
            w.as_tuple(), m.mass(w), sum(wt * masses[g] for g, wt in k.items()),
            math.exp(-m.mass(w)), sum(wt * math.exp(-masses[g]) for g, wt in k.items()),
            est, se))
    return StationarityReport(tuple(recs))
