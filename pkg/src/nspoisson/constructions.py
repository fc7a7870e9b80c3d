"""Two explicit product-space constructions, truncated to finitely many levels.

* ``propT``: a diagonal odometer action on Ω = X^N with B_n = {x_j ∈ A_n for
  j in the n-th block} and dμ/dP = F² = 1 + Σ 2ⁿ 1_{B_n}.
* ``bernoulli``: a product of Bernoulli shifts with rare symbols of
  probability p_k = 4^{−k}k^{−2} and F = 1 + Σ_k Y_k,
  Y_k = Σ_{j<2^k} 2^k f_k∘T^j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import zeta

from .dynamics import DissipativityReport, KappaMeasure, dissipativity_from_norms
from .errors import ArgumentError, ConstructionRejected
from .process import block_rng


@dataclass(frozen=True)
class ProductBase:
    """A truncated product probability space with a base Z-action."""

    kind: str  # "odometer" or "bernoulli_shift"
    levels: int
    symbol_probs: tuple[float, ...]
    tail_bound: float
    action: str

    def __post_init__(self):
        if any(not 0.0 < p < 1.0 for p in self.symbol_probs):
            raise ArgumentError("symbol probabilities must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class DensityFunctional:
    """F (or F²) as a function of the materialized levels only."""

    kind: str
    evaluator: Callable = field(repr=False)
    params: dict = field(default_factory=dict)


# -- property (T) construction -------------------------------------------------------

def block_indices(n: int) -> range:
    """I_n = [n(n−1)/2, n(n+1)/2), the coordinates feeding B_n."""
    return range(n * (n - 1) // 2, n * (n + 1) // 2)


def default_radii(levels: int, kappa: KappaMeasure) -> tuple[int, ...]:
    """G_n = max(s, n) where s is the support radius of κ, so K_n = {|g| ≤ G_n} exhausts Z."""
    s = max(abs(g) for g in kappa.support)
    return tuple(max(s, n) for n in range(1, levels + 1))


def default_coordinate_levels(radii: Sequence[int]) -> tuple[int, ...]:
    """c(n) = n² + ⌈log₂ n⌉ + ⌈log₂ G_n⌉, the smallest clean choice meeting the bound."""
    return tuple(n * n + math.ceil(math.log2(n)) + math.ceil(math.log2(G))
                 for n, G in zip(range(1, len(radii) + 1), radii))


def odometer_flip_probability(c: int, g: int) -> float:
    """m(A △ S_g A) for A = {bit c = 0} under the dyadic odometer, exact for |g| ≤ 2^c."""
    if abs(g) > 2 ** c:
        raise ArgumentError("closed form needs |g| ≤ 2^c")
    return abs(g) / 2.0 ** c


def odometer_flip_enumeration(c: int, g: int) -> float:
    """Same quantity by enumerating the lowest c+1 bits (small c only)."""
    size = 2 ** (c + 1)
    v = np.arange(size, dtype=np.int64)
    w = (v + g) % size
    return float(np.mean(((v >> c) & 1) != ((w >> c) & 1)))


@dataclass(frozen=True, eq=False)
class PropTConstruction:
    base: ProductBase
    density: DensityFunctional
    coordinate_levels: tuple[int, ...]
    radii: tuple[int, ...]
    kappa: KappaMeasure

    @property
    def levels(self) -> int:
        return self.base.levels

    @property
    def n_coords(self) -> int:
        return self.levels * (self.levels + 1) // 2

    def coord_level(self) -> np.ndarray:
        """c(n(j)) for every coordinate j."""
        out = np.empty(self.n_coords, dtype=np.int64)
        for n in range(1, self.levels + 1):
            out[list(block_indices(n))] = self.coordinate_levels[n - 1]
        return out

    def first_level(self, g: int) -> int:
        """Smallest N with |g| ≤ G_n for all n ≥ N (radii are nondecreasing)."""
        for n, G in enumerate(self.radii, start=1):
            if abs(g) <= G:
                return n
        return self.levels + 1


def verify_almost_invariance(coordinate_levels: Sequence[int], radii: Sequence[int]) -> None:
    """m(A_n △ S_g A_n) ≤ 2^{−n²}/n for all |g| ≤ G_n, in exact integer arithmetic.

    The odometer gives m = |g|/2^{c(n)}, so the worst g is G_n; the reported
    offender is the smallest violating g.
    """
    for n, (c, G) in enumerate(zip(coordinate_levels, radii), start=1):
        # |g| / 2^c ≤ 2^{−n²}/n  ⇔  |g|·n·2^{n²} ≤ 2^c
        if G * n * 2 ** (n * n) > 2 ** c:
            g_bad = 2 ** c // (n * 2 ** (n * n)) + 1
            raise ConstructionRejected(
                f"A_{n} (coordinate {c}) is not almost invariant: "
                f"m(A△S_gA) = {g_bad}/2^{c} exceeds 2^-{n * n}/{n}", n, g_bad)


def build_propT_action(levels: int = 12, kappa: KappaMeasure | None = None,
                       coordinate_levels: Sequence[int] | None = None,
                       radii: Sequence[int] | None = None) -> PropTConstruction:
    """The truncated diagonal odometer system with μ = F² dP.

    A_n = {x : bit c(n) of x is 0} in the dyadic odometer; the almost-invariance
    hypothesis is checked exactly before the system is returned.
    """
    if levels < 1:
        raise ArgumentError("need at least one level")
    kappa = KappaMeasure.symmetric_pm() if kappa is None else kappa
    radii = tuple(default_radii(levels, kappa) if radii is None else radii)
    if any(b < a for a, b in zip(radii, radii[1:])):
        raise ArgumentError("radii G_n must be nondecreasing")
    clev = tuple(default_coordinate_levels(radii) if coordinate_levels is None else coordinate_levels)
    if len(clev) != levels or len(radii) != levels:
        raise ArgumentError("need one coordinate level and one radius per level")
    verify_almost_invariance(clev, radii)
    base = ProductBase("odometer", levels, (0.5,), tail_bound=2.0 ** -levels,
                       action="diagonal dyadic odometer")
    density = DensityFunctional("propT", propT_f2, {"levels": levels})
    return PropTConstruction(base, density, clev, radii, kappa)


@dataclass(frozen=True, eq=False)
class OdometerSample:
    """Per coordinate: the bit at level c(n(j)) and the lower bits as a fraction u."""

    bits: np.ndarray  # (trials, n_coords) bool
    u: np.ndarray  # (trials, n_coords) float in [0, 1)


def sample_propT(c: PropTConstruction, trials: int, seed: int) -> OdometerSample:
    rng = block_rng(seed, 0)
    bits = rng.random((trials, c.n_coords)) < 0.5
    u = rng.random((trials, c.n_coords))
    return OdometerSample(bits, u)


def apply_odometer(c: PropTConstruction, s: OdometerSample, g: int) -> OdometerSample:
    """T_g on the sampled coordinates: bit c flips when adding g carries into it."""
    if g == 0:
        return s
    step = abs(g) * np.exp2(-c.coord_level().astype(float))
    if g > 0:
        flip = s.u >= 1.0 - step
        u = s.u + step
        u = np.where(u >= 1.0, u - 1.0, u)
    else:
        flip = s.u < step
        u = s.u - step
        u = np.where(u < 0.0, u + 1.0, u)
    return OdometerSample(s.bits ^ flip, u)


def propT_blocks(bits: np.ndarray, levels: int) -> np.ndarray:
    """1_{B_n} for n = 1..levels, shape (trials, levels)."""
    out = np.empty((bits.shape[0], levels), dtype=bool)
    for n in range(1, levels + 1):
        out[:, n - 1] = ~bits[:, block_indices(n).start:block_indices(n).stop].any(axis=1)
    return out


def propT_f2(bits: np.ndarray, levels: int) -> np.ndarray:
    """F² = 1 + Σ_{n≤levels} 2ⁿ 1_{B_n}."""
    weights = np.exp2(np.arange(1, levels + 1))
    return 1.0 + propT_blocks(bits, levels) @ weights


def l1_majorant(c: PropTConstruction, g: int) -> float:
    """Σ_{n<N} 2ⁿ + Σ_{n≥N} 2ⁿ 2^{−n²} (the series tail is summed to convergence)."""
    if g == 0:
        return 0.0
    N = c.first_level(g)
    return sum(2.0 ** n for n in range(1, N)) + sum(2.0 ** (n - n * n) for n in range(N, 40))


def log_majorant(N: int) -> float:
    """C_N = Σ_{n<N}(n+3)2^{n+1} + Σ_{n≥N}(n+2)2^{n+1}2^{−n²}."""
    return (sum((n + 3) * 2.0 ** (n + 1) for n in range(1, N))
            + sum((n + 2) * 2.0 ** (n + 1 - n * n) for n in range(N, 40)))


@dataclass(frozen=True)
class PropTGRecord:
    g: int
    l1: float
    l1_se: float
    l1_majorant: float
    abs_log: float
    abs_log_se: float
    log_majorant: float
    entropy_term: float
    entropy_term_se: float


@dataclass(frozen=True)
class PropTReport:
    block_probs: tuple[tuple[int, float, float, float], ...]  # (n, estimate, se, 2^-n)
    records: tuple[PropTGRecord, ...]
    entropy: float
    entropy_se: float
    kappa_bound: float  # Σ_N C_N κ(K_N⁻¹ \ K_{N−1}⁻¹) with K_0 = ∅
    scaled_entropy: tuple[tuple[float, float], ...] = ()  # (t, h under μ_t = t·μ)

    def block_z(self) -> list[float]:
        return [(est - p) / se for _, est, se, p in self.block_probs]


def propT_integrability_report(c: PropTConstruction, g_range: Sequence[int], trials: int,
                               seed: int, scales: Sequence[float] = ()) -> PropTReport:
    """MC estimates of ‖F² − F²∘T_g‖₁, ∫|log T_g′|dμ and the κ-entropy, with majorants.

    ``scales`` re-evaluates the entropy on the same sample under μ_t = t·F²dP.
    """
    s = sample_propT(c, trials, seed)
    K = c.levels
    f2 = propT_f2(s.bits, K)
    blocks = propT_blocks(s.bits, K)
    block_probs = []
    for n in range(1, K + 1):
        p = 2.0 ** -n
        block_probs.append((n, float(blocks[:, n - 1].mean()), math.sqrt(p * (1 - p) / trials), p))
    root = math.sqrt(trials)
    recs, ents = {}, {}
    for g in sorted(set(int(g) for g in (*g_range, *c.kappa.support))):
        moved = propT_f2(apply_odometer(c, s, g).bits, K)  # F²∘T_g
        pulled = propT_f2(apply_odometer(c, s, -g).bits, K)  # F²∘T_g⁻¹
        l1 = np.abs(f2 - moved)
        alog = f2 * np.abs(np.log(moved / f2))
        rn = pulled / f2
        ent = f2 * (rn - 1.0 - np.log(rn))
        ents[g] = rn - 1.0 - np.log(rn)
        N = c.first_level(g) if g else 1
        recs[g] = PropTGRecord(g, float(l1.mean()), float(l1.std(ddof=1) / root), l1_majorant(c, g),
                               float(alog.mean()), float(alog.std(ddof=1) / root),
                               log_majorant(N) if g else 0.0,
                               float(ent.mean()), float(ent.std(ddof=1) / root))
    h = sum(w * recs[g].entropy_term for g, w in c.kappa.items())
    h_se = math.sqrt(sum((w * recs[g].entropy_term_se) ** 2 for g, w in c.kappa.items()))
    kb = sum(w * log_majorant(c.first_level(g)) for g, w in c.kappa.items())
    scaled = tuple((float(t), float(sum(w * np.mean(t * f2 * ents[g]) for g, w in c.kappa.items())))
                   for t in scales)
    ordered = tuple(recs[int(g)] for g in g_range)
    return PropTReport(tuple(block_probs), ordered, h, h_se, kb, scaled)


# -- Bernoulli example ------------------------------------------------------------------

def rare_probability(k: int) -> float:
    """p_k = 4^{−k} k^{−2}, the probability of the indicated symbol at level k."""
    return math.ldexp(1.0 / (k * k), -2 * k)  # underflows to 0 rather than overflowing


@dataclass(frozen=True, eq=False)
class BernoulliConstruction:
    base: ProductBase
    density: DensityFunctional
    levels: int
    shift_window: int

    @property
    def probs(self) -> tuple[float, ...]:
        return self.base.symbol_probs


def bernoulli_tail(levels: int) -> float:
    """Σ_{k>K} E[Y_k] = Σ_{k>K} 2^{2k} p_k = Σ_{k>K} k^{−2}."""
    return float(zeta(2.0, levels + 1))


def build_bernoulli_example(levels: int = 8, shift_window: int = 64) -> BernoulliConstruction:
    if levels < 3:
        raise ArgumentError("the Bernoulli example needs at least three levels")
    probs = tuple(rare_probability(k) for k in range(1, levels + 1))
    base = ProductBase("bernoulli_shift", levels, probs, tail_bound=bernoulli_tail(levels),
                       action="diagonal shift")
    density = DensityFunctional("bernoulli", bernoulli_f, {"levels": levels})
    return BernoulliConstruction(base, density, levels, shift_window)


def bernoulli_variance(k: int, n: int) -> float:
    """‖Y_k − Y_k∘Tⁿ‖₂² = 2 min(|n|, 2^k) (1 − p_k)/k².

    For 2^k ≤ |n| this is 2^{k+1}/k²(1 − p_k); otherwise 2|n|/k²(1 − p_k).
    """
    n = abs(int(n))
    return 2.0 * min(n, 2 ** k) * (1.0 - rare_probability(k)) / (k * k)


def bernoulli_fourth_moment(k: int, n: int) -> float:
    """E[(Y_k − Y_k∘Tⁿ)⁴]: a sum of 2 min(|n|, 2^k) independent ±2^k(f − p) terms."""
    n = abs(int(n))
    if n == 0:
        return 0.0
    p = rare_probability(k)
    N = 2 * min(n, 2 ** k)
    s2 = p * (1 - p)
    m4 = p * (1 - p) * (1 - 3 * p + 3 * p * p)
    return 16.0 ** k * (N * m4 + 3 * N * (N - 1) * s2 * s2)


def bernoulli_total(n: int, levels: int | None = None) -> float:
    """‖F − F∘Tⁿ‖₂² = Σ_k ‖Y_k − Y_k∘Tⁿ‖₂², truncated at ``levels`` or summed to infinity."""
    n = abs(int(n))
    if n == 0:
        return 0.0
    if levels is not None:
        return sum(bernoulli_variance(k, n) for k in range(1, levels + 1))
    m = int(math.floor(math.log2(n)))
    head = sum(bernoulli_variance(k, n) for k in range(1, m + 1))
    # k > m: 2n/k² (1 − 4^{−k}k^{−2}); the second series converges geometrically
    tail = 2.0 * n * (float(zeta(2.0, m + 1)) - sum(4.0 ** -k / k ** 4 for k in range(m + 1, m + 60)))
    return head + tail


@dataclass(frozen=True, eq=False)
class BernoulliSample:
    """Sparse positions of the indicated symbol: per level, (trial, position) pairs."""

    trials: int
    span: dict  # k -> number of positions materialized
    ones: dict  # k -> (trial indices, positions)


def sample_bernoulli(c: BernoulliConstruction, trials: int, seed: int, max_shift: int) -> BernoulliSample:
    """Indicated-symbol positions j ∈ [0, 2^k + max_shift) for each level k ≤ K.

    The total count is binomial and the occupied slots are a uniform subset,
    which is the exact law of iid Bernoulli(p_k) bits stored sparsely.
    """
    ones, span = {}, {}
    for k in range(1, c.levels + 1):
        rng = block_rng(seed, k)
        L = 2 ** k + abs(int(max_shift))
        total = trials * L
        count = int(rng.binomial(total, c.probs[k - 1]))
        slots = np.sort(rng.choice(total, size=count, replace=False))
        ones[k] = (slots // L, slots % L)
        span[k] = L
    return BernoulliSample(trials, span, ones)


def level_block_sum(s: BernoulliSample, k: int, shift: int = 0) -> np.ndarray:
    """Y_k∘T^shift per trial = 2^k · #{indicated symbols at positions shift..shift+2^k−1}."""
    if shift < 0 or shift + 2 ** k > s.span[k]:
        raise ArgumentError("shift exceeds the materialized positions")
    tr, pos = s.ones[k]
    sel = (pos >= shift) & (pos < shift + 2 ** k)
    return 2.0 ** k * np.bincount(tr[sel], minlength=s.trials)


def bernoulli_f(s: BernoulliSample, levels: int, shift: int = 0) -> np.ndarray:
    """F∘T^shift truncated at ``levels``: 1 + Σ_{k≤levels} Y_k∘T^shift."""
    out = np.ones(s.trials)
    for k in range(1, levels + 1):
        out += level_block_sum(s, k, shift)
    return out


@dataclass(frozen=True)
class VarianceRecord:
    k: int | None  # None for the truncated total
    n: int
    estimate: float
    empirical_se: float
    model_se: float
    target: float

    @property
    def z(self) -> float:
        if self.model_se == 0:
            return 0.0 if self.estimate == self.target else math.inf
        return (self.estimate - self.target) / self.model_se


@dataclass(frozen=True)
class BernoulliNormReport:
    n: int
    levels: tuple[VarianceRecord, ...]
    total: VarianceRecord
    series_total: float  # untruncated ‖F − F∘Tⁿ‖₂²


def bernoulli_norm_check(c: BernoulliConstruction, n: int, trials: int, seed: int,
                         sample: BernoulliSample | None = None, max_level: int | None = None) -> BernoulliNormReport:
    """MC estimates of ‖Y_k − Y_k∘Tⁿ‖₂² against the closed forms.

    The z-scores use the standard error implied by the closed-form law (the
    fourth moment of a sum of independent centered terms); for rare symbols
    the empirical SE is degenerate whenever no event is observed.
    """
    n_abs = abs(int(n))
    s = sample if sample is not None else sample_bernoulli(c, trials, seed, n_abs)
    K = c.levels if max_level is None else max_level
    root = math.sqrt(s.trials)
    recs = []
    diff_total = np.zeros(s.trials)
    m2_total, m4_total = 0.0, 0.0
    second = []
    for k in range(1, c.levels + 1):
        d = level_block_sum(s, k, 0) - level_block_sum(s, k, n_abs)
        diff_total += d
        v, m4 = bernoulli_variance(k, n_abs), bernoulli_fourth_moment(k, n_abs)
        second.append(v)
        m4_total += m4
        if k <= K:
            sq = d * d
            recs.append(VarianceRecord(k, n_abs, float(sq.mean()), float(sq.std(ddof=1) / root),
                                       math.sqrt(max(m4 - v * v, 0.0)) / root, v))
    m2_total = sum(second)
    cross = 3.0 * (m2_total ** 2 - sum(v * v for v in second))
    var_sq = m4_total + cross - m2_total ** 2
    sq = diff_total * diff_total
    total = VarianceRecord(None, n_abs, float(sq.mean()), float(sq.std(ddof=1) / root),
                           math.sqrt(max(var_sq, 0.0)) / root, m2_total)
    return BernoulliNormReport(n_abs, tuple(recs), total, bernoulli_total(n_abs))


@dataclass(frozen=True)
class BernoulliDissipativity:
    report: DissipativityReport
    lower_bound_constant: float  # C in ‖F − F∘Tⁿ‖² ≥ C|n|/log₂²|n|


def bernoulli_dissipativity(n_max: int = 64) -> BernoulliDissipativity:
    """Partial sums of Σ_{|n|≤N} e^{−½‖F − F∘Tⁿ‖²} from the untruncated series."""
    ns = list(range(-n_max, n_max + 1))
    norms = [bernoulli_total(n) for n in ns]
    rep = dissipativity_from_norms(ns, norms)
    C = min(bernoulli_total(n) * math.log2(n) ** 2 / n for n in range(2, n_max + 1))
    return BernoulliDissipativity(rep, C)
