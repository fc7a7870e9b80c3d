"""Nonsingular bijections of the line with T' = dμ∘T⁻¹/dμ, plus the Z-actions they generate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ArgumentError, PreconditionError
from .measure import (BaseMeasure, Schedule, ScheduleResult, Window, hull_of,
                      integrate_schedule, weighted_line)

CACHE_RANGE = 64
_MERGE_SLACK = 1e-12


def _merge(parts: Sequence[Window]) -> list[Window]:
    parts = sorted(parts, key=lambda w: w.lo)
    out: list[Window] = []
    for w in parts:
        if out and w.lo <= out[-1].hi + _MERGE_SLACK * max(1.0, abs(w.lo)):
            out[-1] = Window(out[-1].lo, max(out[-1].hi, w.hi))
        else:
            out.append(w)
    return out


def _arr(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class NsMap:
    """A nonsingular bijection with its Radon–Nikodym derivative.

    ``rn_support`` is a window outside which T' = 1 (None when unknown or
    unbounded); ``locality`` is a window outside which T is the identity.
    ``image_parts`` and ``preimage_parts`` split the image of a window into
    intervals; when omitted, T is taken to be increasing.
    """

    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    rn_derivative: Callable[[np.ndarray], np.ndarray]
    label: str = ""
    locality: Window | None = None
    rn_support: Window | None = None
    breakpoints: tuple[float, ...] = ()
    measure_preserving: bool = False
    conservative: bool = False
    image_parts: Callable[[Window], list[Window]] | None = field(default=None, repr=False)
    preimage_parts: Callable[[Window], list[Window]] | None = field(default=None, repr=False)

    def __call__(self, x):
        return self.forward(_arr(x))

    def rn(self, x) -> np.ndarray:
        x = _arr(x)
        if self.measure_preserving:
            return np.ones(x.shape)
        return self.rn_derivative(x)

    @property
    def rn_window(self) -> Window | None:
        """A window outside which T' = 1, if one is known."""
        if self.rn_support is not None:
            return self.rn_support
        return self.locality

    @property
    def is_local(self) -> bool:
        return self.measure_preserving or self.rn_window is not None

    def parts_of_image(self, w: Window) -> list[Window]:
        if self.image_parts is not None:
            return _merge(self.image_parts(w))
        lo, hi = self.forward(np.array([w.lo, w.hi]))
        return [Window(lo, hi)]

    def parts_of_preimage(self, w: Window) -> list[Window]:
        if self.preimage_parts is not None:
            return _merge(self.preimage_parts(w))
        lo, hi = self.inverse(np.array([w.lo, w.hi]))
        return [Window(lo, hi)]

    def image(self, w: Window) -> Window:
        """T(w) as a window; raises when the image is not an interval."""
        parts = self.parts_of_image(w)
        if len(parts) != 1:
            raise ArgumentError(f"image of {w.as_tuple()} under {self.label or 'T'} is not an interval")
        return parts[0]

    def image_hull(self, w: Window) -> Window:
        return hull_of(self.parts_of_image(w))

    def preimage_hull(self, w: Window) -> Window:
        return hull_of(self.parts_of_preimage(w))


def identity_map() -> NsMap:
    return NsMap(lambda x: _arr(x).copy(), lambda x: _arr(x).copy(), lambda x: np.ones(np.shape(x)),
                 label="identity", measure_preserving=True, conservative=True)


def inverse_map(T: NsMap) -> NsMap:
    """T⁻¹ with (T⁻¹)'(x) = 1 / T'(T x)."""
    rn_w = T.rn_window
    return NsMap(
        forward=T.inverse,
        inverse=T.forward,
        rn_derivative=lambda x: 1.0 / T.rn(T.forward(_arr(x))),
        label=f"inv({T.label})",
        locality=T.locality,
        rn_support=T.preimage_hull(rn_w) if rn_w is not None else None,
        breakpoints=tuple(sorted(set(T.inverse(np.array(T.breakpoints)).tolist()))) if T.breakpoints else (),
        measure_preserving=T.measure_preserving,
        conservative=T.conservative,
        image_parts=T.preimage_parts,
        preimage_parts=T.image_parts,
    )


def compose(S: NsMap, T: NsMap) -> NsMap:
    """Apply S, then T.  (T∘S)' = (S'∘T⁻¹)·T'."""
    if S.measure_preserving and T.measure_preserving:
        rn_support = None
    else:
        ws = []
        for M in (S, T):
            if not M.measure_preserving:
                if M.rn_window is None:
                    ws = None
                    break
                ws.append(M.rn_window if M is T else T.image_hull(M.rn_window))
        rn_support = hull_of(ws) if ws else None
    locality = S.locality.hull(T.locality) if (S.locality and T.locality) else None
    bps = set(T.breakpoints)
    if S.breakpoints:
        bps.update(T.forward(np.array(S.breakpoints)).tolist())

    def image_parts(w):
        return [q for p in S.parts_of_image(w) for q in T.parts_of_image(p)]

    def preimage_parts(w):
        return [q for p in T.parts_of_preimage(w) for q in S.parts_of_preimage(p)]

    monotone = S.image_parts is None and T.image_parts is None
    return NsMap(
        forward=lambda x: T.forward(S.forward(_arr(x))),
        inverse=lambda x: S.inverse(T.inverse(_arr(x))),
        rn_derivative=lambda x: S.rn(T.inverse(_arr(x))) * T.rn(x),
        label=f"{T.label}∘{S.label}",
        locality=locality,
        rn_support=rn_support,
        breakpoints=tuple(sorted(bps)),
        measure_preserving=S.measure_preserving and T.measure_preserving,
        image_parts=None if monotone else image_parts,
        preimage_parts=None if monotone else preimage_parts,
    )


# -- membership norms --------------------------------------------------------

def _rn_integral(T: NsMap, m: BaseMeasure, integrand: Callable, schedule: Schedule | None,
                 tol: float) -> ScheduleResult:
    if T.measure_preserving:
        return ScheduleResult(0.0, (0.0,), "finite")
    w = T.rn_window
    h = lambda x: integrand(T.rn(x))
    if w is not None:
        v, e = m.integrate_with_error(h, w, tol=tol, breakpoints=T.breakpoints)
        return ScheduleResult(v, (v,), "finite", e)
    if schedule is None:
        raise ArgumentError(f"{T.label or 'map'} has no bounded RN support; pass a window schedule")
    return integrate_schedule(m, h, schedule, tol=tol, breakpoints=T.breakpoints)


def aut2_deficiency(T: NsMap, m: BaseMeasure, schedule: Schedule | None = None,
                    tol: float = 1e-12) -> float:
    """‖√T′−1‖₂²; ``inf`` when the schedule's partial integrals diverge."""
    return _rn_integral(T, m, lambda r: (np.sqrt(r) - 1.0) ** 2, schedule, tol).value


def aut1_deficiency(T: NsMap, m: BaseMeasure, schedule: Schedule | None = None,
                    tol: float = 1e-12) -> float:
    """‖T′−1‖₁; ``inf`` when the schedule's partial integrals diverge."""
    return _rn_integral(T, m, lambda r: np.abs(r - 1.0), schedule, tol).value


def chi(T: NsMap, m: BaseMeasure, schedule: Schedule | None = None, tol: float = 1e-12) -> float:
    """χ(T) = ∫(T′−1)dμ, defined on Aut₁."""
    if not math.isfinite(aut1_deficiency(T, m, schedule, tol)):
        raise PreconditionError(f"chi needs T in Aut1 but ‖T′−1‖₁ diverges for {T.label or 'map'}",
                                norm="aut1")
    return _rn_integral(T, m, lambda r: r - 1.0, schedule, tol).value


def change_of_variables_residual(T: NsMap, m: BaseMeasure, h: Callable, w: Window,
                                 tol: float = 1e-12) -> float:
    """|∫_{T(w)} h·T′ dμ − ∫_w h∘T dμ|; zero when T′ has the right orientation."""
    bps = list(T.breakpoints)
    if bps:
        bps += T.inverse(np.array(bps)).tolist()
    lhs = sum(m.integrate(lambda x: h(x) * T.rn(x), p, tol=tol, breakpoints=bps)
              for p in T.parts_of_image(w))
    rhs = m.integrate(lambda x: h(T.forward(x)), w, tol=tol, breakpoints=bps)
    return abs(lhs - rhs)


# -- Z-actions ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ActionZ:
    """g ↦ T_g generated by one map; iterates with |g| ≤ ``cache_range`` are built eagerly."""

    generator: NsMap
    power: Callable[[int], NsMap] | None = field(default=None, repr=False)
    cache_range: int = CACHE_RANGE
    label: str = ""
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.cache:
            return
        cache = {0: identity_map()}
        inv = inverse_map(self.generator)
        for g in range(1, self.cache_range + 1):
            if self.power is not None:
                cache[g], cache[-g] = self.power(g), self.power(-g)
            else:
                cache[g] = self.generator if g == 1 else compose(cache[g - 1], self.generator)
                cache[-g] = inv if g == 1 else compose(cache[-g + 1], inv)
        object.__setattr__(self, "cache", cache)

    def iterate(self, g: int) -> NsMap:
        g = int(g)
        if g in self.cache:
            return self.cache[g]
        if self.power is not None:
            return self.power(g)
        step = self.cache[self.cache_range if g > 0 else -self.cache_range]
        out = self.cache[int(math.copysign(abs(g) % self.cache_range, g))]
        for _ in range(abs(g) // self.cache_range):
            out = compose(out, step)
        return out

    @property
    def conservative(self) -> bool:
        return self.generator.conservative


def cocycle_norm(a: ActionZ, g: int, m: BaseMeasure, schedule: Schedule | None = None) -> float:
    """‖c(g)‖₂ = ‖√T_g′ − 1‖₂."""
    return math.sqrt(aut2_deficiency(a.iterate(g), m, schedule))


def cocycle_value(a: ActionZ, g: int, x) -> np.ndarray:
    """c(g)(x) = √T_g′(x) − 1."""
    return np.sqrt(a.iterate(g).rn(x)) - 1.0


def cocycle_identity_residual(a: ActionZ, g: int, h: int, x) -> float:
    """max |c(g+h) − c(g) − U_{T_g}c(h)| over the sample points ``x``."""
    x = _arr(x)
    Tg = a.iterate(g)
    lhs = cocycle_value(a, g + h, x)
    rhs = cocycle_value(a, g, x) + cocycle_value(a, h, Tg.inverse(x)) * np.sqrt(Tg.rn(x))
    return float(np.max(np.abs(lhs - rhs)))


# -- builders -------------------------------------------------------------------

def _density_jumps(m: BaseMeasure) -> list[float]:
    return [p.lo for p in m.pieces if math.isfinite(p.lo)] + \
           [p.hi for p in m.pieces if math.isfinite(p.hi)]


def make_translation(t: float, m: BaseMeasure | None = None) -> NsMap:
    """T(x) = x + t, with T′(x) = ρ(x − t)/ρ(x) for the density ρ of ``m``.

    On the weighted line this gives χ(T_{−t}) = t.  For piecewise-constant
    densities T′ differs from 1 only within distance |t| of a density jump.
    """
    m = weighted_line() if m is None else m
    t = float(t)
    label = f"translate({t:g})"
    if t == 0.0:
        return NsMap(identity_map().forward, identity_map().inverse, identity_map().rn_derivative,
                     label=label, measure_preserving=True, conservative=True)

    def rn(x):
        x = _arr(x)
        return m.density(x - t) / m.density(x)

    if m.piecewise_constant:
        jumps = sorted(set(_density_jumps(m)))
        dens = [p.constant for p in m.pieces]
        preserving = not jumps or len(set(dens)) == 1
        rn_support = None if preserving else hull_of(
            [Window(min(b, b + t), max(b, b + t)) for b in jumps])
        bps = tuple(sorted({*jumps, *(b + t for b in jumps)}))
    else:
        preserving, rn_support, bps = False, None, ()
    return NsMap(lambda x: _arr(x) + t, lambda x: _arr(x) - t, rn, label=label,
                 rn_support=rn_support, breakpoints=bps, measure_preserving=preserving)


def translation_action(t: float = 1.0, m: BaseMeasure | None = None) -> ActionZ:
    m = weighted_line() if m is None else m
    return ActionZ(make_translation(t, m), power=lambda g: make_translation(g * t, m),
                   label=f"translation({t:g})")


def _subtract(w: Window, blocks) -> list[Window]:
    rest = [w]
    for blk in blocks:
        nxt = []
        for r in rest:
            if r.disjoint(blk):
                nxt.append(r)
                continue
            if r.lo < blk.lo:
                nxt.append(Window(r.lo, blk.lo))
            if r.hi > blk.hi:
                nxt.append(Window(blk.hi, r.hi))
        rest = nxt
    return rest


def make_swap(A: Window, B: Window, m: BaseMeasure) -> NsMap:
    """The involution exchanging A and B by cumulative-mass matching, identity elsewhere.

    T′ = μ(B)/μ(A) on A and μ(A)/μ(B) on B.  Periodic, hence declared conservative.
    """
    if not A.disjoint(B):
        raise ArgumentError("swap blocks must be disjoint")
    mA, mB = m.mass(A), m.mass(B)
    if not (mA > 0 and mB > 0):
        raise ArgumentError("swap blocks need positive mass")

    def across(x, src: Window, dst: Window, ms: float, md: float):
        frac = m.cumulative(src.lo, x) / ms
        return np.clip(m.solve_cumulative(dst.lo, frac * md, lo=dst.lo, hi=dst.hi), dst.lo, dst.hi)

    def fwd(x):
        x = _arr(x)
        out = x.copy()
        inA, inB = A.contains(x), B.contains(x)
        if inA.any():
            out[inA] = across(x[inA], A, B, mA, mB)
        if inB.any():
            out[inB] = across(x[inB], B, A, mB, mA)
        return out

    def rn(x):
        x = _arr(x)
        return np.where(A.contains(x), mB / mA, np.where(B.contains(x), mA / mB, 1.0))

    def parts(w: Window) -> list[Window]:
        out = []
        for src, dst, ms, md in ((A, B, mA, mB), (B, A, mB, mA)):
            piece = w.intersect(src)
            if piece is not None:
                lo, hi = across(np.array([piece.lo, piece.hi]), src, dst, ms, md)
                out.append(Window(lo, hi))
        return out + _subtract(w, (A, B))

    loc = A.hull(B)
    return NsMap(fwd, fwd, rn, label=f"swap({A.lo:g},{A.hi:g};{B.lo:g},{B.hi:g})",
                 locality=loc, rn_support=loc, breakpoints=(A.lo, A.hi, B.lo, B.hi),
                 measure_preserving=abs(mA - mB) <= 1e-14 * max(mA, mB),
                 conservative=True, image_parts=parts, preimage_parts=parts)


def swap_action(A: Window, B: Window, m: BaseMeasure) -> ActionZ:
    S = make_swap(A, B, m)
    I = identity_map()
    return ActionZ(S, power=lambda g: S if g % 2 else I, label=S.label)


def make_density_map(phi: Callable, support: Window, m: BaseMeasure,
                     breakpoints: Sequence[float] = (), label: str = "") -> NsMap:
    """Monotone T with T′ = φ on ``support`` (φ = 1 elsewhere), so μ∘T⁻¹ = φμ.

    T is the identity left of ``support`` and matches cumulative masses from
    ``support.lo`` onwards: ν[lo, T x] = μ[lo, x] with ν = φμ.
    """
    nu = m.reweighted(phi, support, breakpoints)
    a = support.lo

    def fwd(x):
        x = _arr(x)
        out = x.copy()
        right = x > a
        if right.any():
            out[right] = nu.solve_cumulative(a, m.cumulative(a, x[right]))
        return out

    def inv(y):
        y = _arr(y)
        out = y.copy()
        right = y > a
        if right.any():
            out[right] = m.solve_cumulative(a, nu.cumulative(a, y[right]))
        return out

    def rn(x):
        x = _arr(x)
        return np.where(support.contains(x), phi(x), 1.0)

    return NsMap(fwd, inv, rn, label=label or "density_map", rn_support=support,
                 breakpoints=tuple(sorted({support.lo, support.hi, *breakpoints})))


def make_dilation(c: float) -> NsMap:
    """x ↦ c·x on Lebesgue measure: T′ ≡ 1/c, outside Aut₂ unless c = 1."""
    c = float(c)
    if not c > 0:
        raise ArgumentError("dilation factor must be positive")
    return NsMap(lambda x: c * _arr(x), lambda x: _arr(x) / c,
                 lambda x: np.full(np.shape(x), 1.0 / c), label=f"dilate({c:g})",
                 measure_preserving=c == 1.0)
