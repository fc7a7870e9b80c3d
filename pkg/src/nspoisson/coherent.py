"""Coherent vectors Exp f on configurations and the affine Koopman operators acting on them.

Exp f(ω) = e^{−∫f dμ} ∏_{x∈ω} (1 + f(x)).  Products are accumulated as sums
of logarithms with the sign tracked separately, both for single
configurations and for flat batches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ArgumentError
from .measure import (DEFAULT_TOL, BaseMeasure, Window, hull_of,
                      DIVERGENCE_CEILING, DIVERGENCE_GROWTH)
from .nsmap import NsMap, inverse_map
from .process import ConfigBatch, PointConfig, pushforward_batch, sample_batch

QUAD_TOL = 1e-13


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A function supported in a bounded window (zero outside it)."""

    __test__ = False  # not a pytest class

    expr: Callable[[np.ndarray], np.ndarray]
    support: Window
    breakpoints: tuple[float, ...] = ()
    is_complex: bool = False
    label: str = ""

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex if self.is_complex else float)
        inside = self.support.contains(x)
        if inside.any():
            out[inside] = self.expr(x[inside])
        return out

    def integral(self, m: BaseMeasure, tol: float = QUAD_TOL):
        return m.integrate(self, self.support, tol=tol, breakpoints=self.breakpoints)

    def norm2_sq(self, m: BaseMeasure, tol: float = QUAD_TOL) -> float:
        return float(m.integrate(lambda x: np.abs(self(x)) ** 2, self.support, tol=tol,
                                 breakpoints=self.breakpoints))


def _bps(*fs: TestFunction) -> tuple[float, ...]:
    pts = set()
    for f in fs:
        pts.update(f.breakpoints)
        pts.update(f.support.as_tuple())
    return tuple(sorted(pts))


def inner(f: TestFunction, g: TestFunction, m: BaseMeasure, tol: float = QUAD_TOL):
    """⟨f, g⟩ = ∫ f·conj(g) dμ; the plain bilinear pairing when both are real."""
    w = f.support.intersect(g.support)
    if w is None:
        return 0.0
    h = (lambda x: f(x) * np.conj(g(x))) if (f.is_complex or g.is_complex) else (lambda x: f(x) * g(x))
    return m.integrate(h, w, tol=tol, breakpoints=_bps(f, g))


def zero_function(w: Window) -> TestFunction:
    return TestFunction(lambda x: np.zeros(np.shape(x)), w, label="0")


def indicator(w: Window, value: complex = 1.0) -> TestFunction:
    """value · 1_w."""
    is_c = isinstance(value, complex)
    return TestFunction(lambda x: np.full(np.shape(x), value, dtype=complex if is_c else float),
                        w, is_complex=is_c, label=f"{value:g}*1[{w.lo:g},{w.hi:g})")


def bump(w: Window, amplitude: float = 1.0, shift: float = 0.0) -> TestFunction:
    """shift + amplitude · sin²(π(x − lo)/(hi − lo)) on w; smooth inside w."""
    lo, L = w.lo, w.length
    return TestFunction(lambda x: shift + amplitude * np.sin(np.pi * (x - lo) / L) ** 2, w,
                        label=f"bump({amplitude:g},{shift:g})")


def bullet(f: TestFunction, g: TestFunction) -> TestFunction:
    """f•g = (1 + f)(1 + g) − 1, supported on the hull of both supports."""
    return TestFunction(lambda x: (1.0 + f(x)) * (1.0 + g(x)) - 1.0,
                        f.support.hull(g.support), _bps(f, g),
                        f.is_complex or g.is_complex, f"({f.label})•({g.label})")


# -- pathwise evaluation ----------------------------------------------------

def _require_cover(window: Window, f: TestFunction) -> None:
    if not window.covers(f.support):
        raise ArgumentError(f"configuration window {window.as_tuple()} does not cover the support "
                            f"{f.support.as_tuple()} of {f.label or 'f'}")


def _log_factors(values: np.ndarray, trial: np.ndarray, n: int):
    """Per-trial (sign, log) of ∏ values.  For complex values the sign is 1."""
    if np.iscomplexobj(values):
        with np.errstate(divide="ignore"):
            logs = np.log(values)
        tot = (np.bincount(trial, weights=logs.real, minlength=n)
               + 1j * np.bincount(trial, weights=logs.imag, minlength=n))
        return np.ones(n), tot
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(values))
    tot = np.bincount(trial, weights=logs, minlength=n)
    negs = np.bincount(trial, weights=(values < 0).astype(float), minlength=n)
    return np.where(negs % 2 == 1, -1.0, 1.0), tot


def log_exp_batch(f: TestFunction, batch: ConfigBatch, m: BaseMeasure, integral=None):
    """(sign, log|Exp f|) per trial; the log is complex for complex f."""
    _require_cover(batch.window, f)
    I = f.integral(m) if integral is None else integral
    mask = f.support.contains(batch.points)
    sign, logs = _log_factors(1.0 + f(batch.points[mask]), batch.trial[mask], batch.n_trials)
    return sign, logs - I


def _to_value(sign, logs):
    return sign * np.exp(logs)


def exp_eval_batch(f: TestFunction, batch: ConfigBatch, m: BaseMeasure, integral=None) -> np.ndarray:
    return _to_value(*log_exp_batch(f, batch, m, integral))


def _single(omega: PointConfig) -> ConfigBatch:
    return ConfigBatch(omega.points, np.zeros(len(omega), dtype=np.int64), 1, omega.window)


def exp_eval(f: TestFunction, omega: PointConfig, m: BaseMeasure):
    """Exp f(ω) = e^{−∫f dμ} ∏_{x∈ω}(1 + f(x))."""
    v = exp_eval_batch(f, _single(omega), m)[0]
    return complex(v) if f.is_complex else float(v)


def log_extended_batch(f: TestFunction, g: TestFunction, batch: ConfigBatch, m: BaseMeasure):
    """(sign, log) of Exp(f•g) := e^{−∫fg dμ} Exp f · Exp g."""
    sf, lf = log_exp_batch(f, batch, m)
    sg, lg = log_exp_batch(g, batch, m)
    w = f.support.intersect(g.support)
    fg = 0.0 if w is None else m.integrate(lambda x: f(x) * g(x), w, tol=QUAD_TOL,
                                           breakpoints=_bps(f, g))
    return sf * sg, lf + lg - fg


def extended_exp_batch(f, g, batch, m) -> np.ndarray:
    return _to_value(*log_extended_batch(f, g, batch, m))


def extended_exp_eval(f: TestFunction, g: TestFunction, omega: PointConfig, m: BaseMeasure):
    v = extended_exp_batch(f, g, _single(omega), m)[0]
    return complex(v) if (f.is_complex or g.is_complex) else float(v)


# -- |Exp φ| identity ------------------------------------------------------------

@dataclass(frozen=True)
class AbsIdentityReport:
    lhs: np.ndarray
    rhs: np.ndarray
    rel_diff: np.ndarray

    @property
    def max_rel_diff(self) -> float:
        return float(np.max(self.rel_diff)) if self.rel_diff.size else 0.0


def abs_tilde(phi: TestFunction) -> TestFunction:
    """φ̃ = |1 + φ| − 1."""
    return TestFunction(lambda x: np.abs(1.0 + phi(x)) - 1.0, phi.support, phi.breakpoints,
                        label=f"tilde({phi.label})")


def abs_exp_identity_batch(phi: TestFunction, batch: ConfigBatch, m: BaseMeasure) -> AbsIdentityReport:
    """|Exp φ| against e^{−2∫_{φ+1<0}(φ+1)dμ} Exp φ̃, per path (relative difference)."""
    if phi.is_complex:
        raise ArgumentError("the |Exp φ| identity is for real φ")
    from .measure import level_set_points
    w = phi.support
    crossings = level_set_points(lambda x: phi(x) + 1.0, w.lo, w.hi)
    bps = tuple(sorted({*phi.breakpoints, *crossings}))
    neg = m.integrate(lambda x: np.minimum(phi(x) + 1.0, 0.0), w, tol=QUAD_TOL, breakpoints=bps)
    tilde = abs_tilde(phi)
    tilde_int = m.integrate(tilde, w, tol=QUAD_TOL, breakpoints=bps)
    sign, logs = log_exp_batch(phi, batch, m)
    st, lt = log_exp_batch(tilde, batch, m, integral=tilde_int)
    log_rhs = lt - 2.0 * neg
    lhs, rhs = np.exp(logs), st * np.exp(log_rhs)
    rel = np.abs(np.expm1(logs - log_rhs))
    rel = np.where(np.isneginf(logs) & np.isneginf(log_rhs), 0.0, rel)
    return AbsIdentityReport(lhs, rhs, rel)


def abs_exp_identity_check(phi: TestFunction, omega: PointConfig, m: BaseMeasure) -> AbsIdentityReport:
    return abs_exp_identity_batch(phi, _single(omega), m)


# -- Monte Carlo exponential relation ---------------------------------------------

@dataclass(frozen=True)
class MCEstimate:
    estimate: complex | float
    se: complex | float
    target: complex | float

    @property
    def z(self) -> float:
        """Largest componentwise z-score."""
        d = complex(self.estimate) - complex(self.target)
        s = complex(self.se)
        zs = [abs(d.real) / s.real if s.real > 0 else (0.0 if d.real == 0 else math.inf),
              abs(d.imag) / s.imag if s.imag > 0 else (0.0 if abs(d.imag) < 1e-15 else math.inf)]
        return max(zs)

    @property
    def passed(self) -> bool:
        return self.z <= 4.0


def mean_and_se(values: np.ndarray):
    """Sample mean with componentwise standard error."""
    v = np.asarray(values)
    n = v.size
    if np.iscomplexobj(v):
        se = complex(np.std(v.real, ddof=1) / math.sqrt(n), np.std(v.imag, ddof=1) / math.sqrt(n))
        return complex(v.mean()), se
    return float(v.mean()), float(np.std(v, ddof=1) / math.sqrt(n))


def inner_product_mc(f: TestFunction, g: TestFunction, trials: int, seed: int,
                     m: BaseMeasure) -> MCEstimate:
    """MC mean of Exp f · conj(Exp g) under μ*, with target e^{⟨f,g⟩}."""
    w = f.support.hull(g.support)
    batch = sample_batch(m, w, trials, seed)
    vals = exp_eval_batch(f, batch, m) * np.conj(exp_eval_batch(g, batch, m))
    if not (f.is_complex or g.is_complex):
        vals = vals.real
    est, se = mean_and_se(vals)
    target = np.exp(inner(f, g, m))
    return MCEstimate(est, se, complex(target) if np.iscomplexobj(target) else float(target))


# -- affine Koopman operator and the Weyl identity -----------------------------------

def koopman_apply(T: NsMap, f: TestFunction) -> TestFunction:
    """U_T f = f∘T⁻¹ · √T′."""
    return TestFunction(lambda y: f(T.inverse(y)) * np.sqrt(T.rn(y)), T.image_hull(f.support),
                        _mapped_bps(T, f), f.is_complex, f"U({f.label})")


def _mapped_bps(T: NsMap, f: TestFunction) -> tuple[float, ...]:
    pts = set(T.breakpoints)
    src = [*f.breakpoints, *f.support.as_tuple()]
    pts.update(np.asarray(T.forward(np.array(src)), dtype=float).tolist())
    return tuple(sorted(pts))


def affine_apply(T: NsMap, f: TestFunction, m: BaseMeasure | None = None) -> TestFunction:
    """A_T f = U_T f + √T′ − 1 = (f∘T⁻¹ + 1)√T′ − 1 (real f only)."""
    if f.is_complex:
        raise ArgumentError("affine_apply acts on real functions")
    if not T.is_local:
        raise ArgumentError(f"{T.label or 'map'} is not local; A_T f would have unbounded support")
    supp = T.image_hull(f.support)
    if not T.measure_preserving:
        supp = supp.hull(T.rn_window)
    return TestFunction(lambda y: (f(T.inverse(y)) + 1.0) * np.sqrt(T.rn(y)) - 1.0, supp,
                        _mapped_bps(T, f), label=f"A({f.label})")


def cocycle_function(T: NsMap) -> TestFunction:
    """c = √T′ − 1 as a test function on the RN window."""
    w = T.rn_window
    if w is None:
        raise ArgumentError("the cocycle of a map without bounded RN support is not a test function")
    return TestFunction(lambda x: np.sqrt(T.rn(x)) - 1.0, w, T.breakpoints, label=f"c({T.label})")


@dataclass(frozen=True)
class WeylReport:
    lhs: np.ndarray
    rhs: np.ndarray
    rel_diff: np.ndarray

    @property
    def max_rel_diff(self) -> float:
        return float(np.max(self.rel_diff)) if self.rel_diff.size else 0.0


def weyl_koopman_batch(T: NsMap, f: TestFunction, batch: ConfigBatch, m: BaseMeasure) -> WeylReport:
    """U_{T_*}Exp f against W_{A_T}Exp f on each path.

    Left: √((T_*)′(ω)) · Exp f(T_*⁻¹ω).  Right: e^{−½‖c‖² − ⟨c, U_T f⟩} Exp(A_T f)(ω)
    with c = √T′ − 1.
    """
    from .suspension import log_rn_suspension_batch

    if f.is_complex:
        raise ArgumentError("the Weyl check is for real f")
    A = affine_apply(T, f, m)
    _require_cover(batch.window, A)
    # left side
    if T.measure_preserving:
        log_rn = np.zeros(batch.n_trials)
    else:
        log_rn = log_rn_suspension_batch(T, batch, m)
    pulled = pushforward_batch(batch, inverse_map(T))
    s_l, l_l = log_exp_batch(f, pulled, m)
    log_lhs = 0.5 * log_rn + l_l
    # right side
    if T.measure_preserving:
        pref = 0.0
    else:
        c = cocycle_function(T)
        pref = -0.5 * c.norm2_sq(m) - inner(c, koopman_apply(T, f), m)
    s_r, l_r = log_exp_batch(A, batch, m)
    log_rhs = pref + l_r
    rel = np.where(s_l == s_r, np.abs(np.expm1(log_lhs - log_rhs)), 2.0)
    rel = np.where(np.isneginf(log_lhs) & np.isneginf(log_rhs), 0.0, rel)
    return WeylReport(s_l * np.exp(log_lhs), s_r * np.exp(log_rhs), rel)


def weyl_koopman_check(T: NsMap, f: TestFunction, omega: PointConfig, m: BaseMeasure) -> WeylReport:
    return weyl_koopman_batch(T, f, _single(omega), m)


# -- L² diagnostic -----------------------------------------------------------------------

@dataclass(frozen=True)
class SecondMomentProfile:
    """E[(Exp φ_k)²] = e^{‖φ_k‖²} along a family of truncations φ_k."""

    norms_sq: tuple[float, ...]
    moments: tuple[float, ...]
    verdict: str


def second_moment_profile(family: Sequence[TestFunction], m: BaseMeasure,
                          ceiling: float = DIVERGENCE_CEILING,
                          growth: float = DIVERGENCE_GROWTH) -> SecondMomentProfile:
    """Second moments of coherent vectors over increasingly fine truncations.

    Uses (Exp φ)² = e^{‖φ‖²} Exp(φ•φ) and E[Exp] = 1.  The verdict is
    "divergent" when the moment passes ``ceiling`` while still growing.
    """
    norms, moments = [], []
    verdict = "finite"
    for f in family:
        n2 = f.norm2_sq(m, tol=1e-10)
        mom = math.exp(n2) if n2 < 700 else math.inf
        if moments and mom > ceiling and mom > (1 + growth) * moments[-1]:
            verdict = "divergent"
        norms.append(n2)
        moments.append(mom)
    return SecondMomentProfile(tuple(norms), tuple(moments), verdict)


def power_singularity(w: Window, exponent: float, delta: float) -> TestFunction:
    """|x|^{−exponent} on w, truncated to |x| ≥ delta."""
    return TestFunction(lambda x: np.where(np.abs(x) >= delta, np.abs(np.where(x == 0, 1.0, x)) ** (-exponent), 0.0),
                        w, tuple(t for t in (-delta, 0.0, delta) if w.lo < t < w.hi),
                        label=f"|x|^-{exponent:g} (|x|>={delta:g})")
