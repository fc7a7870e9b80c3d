"""Characteristic functions of infinitely divisible laws driven by Poisson measures.

The law of I_μ(f) + drift has Lévy measure μ∘f⁻¹ and no Gaussian part, so

    E exp(ia X) = exp(ia·drift + ∫ (e^{iaf} − 1 − iaf 1_{|f|≤1}) dμ).

For log dν*/dμ* the jump map is log φ and the drift is β.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .coherent import TestFunction
from .errors import ArgumentError
from .measure import BaseMeasure, level_set_points
from .suspension import DensityRatio, beta

CF_TOL = 1e-12
DEFAULT_GRID = tuple(np.linspace(-3.0, 3.0, 25).tolist())
MIN_SAMPLES = 1000


@dataclass(frozen=True, eq=False)
class LevyData:
    """Lévy triple (σ = μ∘jump⁻¹, drift, no Gaussian part)."""

    base: BaseMeasure
    jump: TestFunction
    drift: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.jump.is_complex:
            raise ArgumentError("the jump map must be real")

    @classmethod
    def from_ratio(cls, d: DensityRatio, m: BaseMeasure) -> "LevyData":
        """Triple of log dν*/dμ*: jump log φ, drift β."""
        return cls(m, d.log_function(), beta(d, m), label=f"log RN {d.label}")

    def scaled(self, t: float) -> "LevyData":
        """The triple for μ_t = tμ: σ and drift both scale by t."""
        return replace(self, base=self.base.scaled(t), drift=self.drift * t)

    def breakpoints(self) -> tuple[float, ...]:
        w = self.jump.support
        pts = level_set_points(lambda x: np.abs(self.jump(x)), w.lo, w.hi, (1.0,))
        return tuple(sorted({*self.jump.breakpoints, *pts}))

    def levy_integrability(self) -> float:
        """∫ min(f², 1) dμ, finite for a Lévy measure."""
        f = self.jump
        return float(self.base.integrate(lambda x: np.minimum(f(x) ** 2, 1.0), f.support,
                                         breakpoints=self.breakpoints()))

    def mean(self) -> float:
        """drift + ∫_{|f|>1} f dμ."""
        f = self.jump
        big = self.base.integrate(lambda x: np.where(np.abs(f(x)) > 1.0, f(x), 0.0), f.support,
                                  tol=CF_TOL, breakpoints=self.breakpoints())
        return self.drift + float(big)


def char_exponent(l: LevyData, a: float) -> complex:
    """ia·drift + ∫(e^{iaf} − 1 − iaf 1_{|f|≤1})dμ."""
    f = l.jump

    def integrand(x):
        v = f(x)
        return np.expm1(1j * a * v) - 1j * a * v * (np.abs(v) <= 1.0)

    val = l.base.integrate(integrand, f.support, tol=CF_TOL, breakpoints=l.breakpoints())
    return 1j * a * l.drift + complex(val)


def char_fn_analytic(l: LevyData, a: float) -> complex:
    return complex(np.exp(char_exponent(l, float(a))))


def char_fn_empirical(samples, a: float) -> tuple[complex, complex]:
    """Mean of e^{ia·sample} with componentwise standard error."""
    s = np.asarray(samples, dtype=float)
    if s.size < MIN_SAMPLES:
        raise ArgumentError(f"need at least {MIN_SAMPLES} samples, got {s.size}")
    c, d = np.cos(a * s), np.sin(a * s)
    n = math.sqrt(s.size)
    return complex(c.mean(), d.mean()), complex(c.std(ddof=1) / n, d.std(ddof=1) / n)


@dataclass(frozen=True)
class CFRecord:
    a: float
    analytic: complex
    empirical: complex
    se: complex

    @property
    def z(self) -> float:
        d = self.empirical - self.analytic
        zr = abs(d.real) / self.se.real if self.se.real > 0 else (0.0 if abs(d.real) < 1e-12 else math.inf)
        zi = abs(d.imag) / self.se.imag if self.se.imag > 0 else (0.0 if abs(d.imag) < 1e-12 else math.inf)
        return max(zr, zi)


def compare_char_fn(l: LevyData, samples, grid: Sequence[float] = DEFAULT_GRID) -> list[CFRecord]:
    out = []
    for a in grid:
        emp, se = char_fn_empirical(samples, a)
        out.append(CFRecord(float(a), char_fn_analytic(l, a), emp, se))
    return out


@dataclass(frozen=True)
class MeanCheck:
    estimate: float
    se: float
    target: float

    @property
    def z(self) -> float:
        return (self.estimate - self.target) / self.se if self.se > 0 else 0.0


def id_mean_check(l: LevyData, samples) -> MeanCheck:
    s = np.asarray(samples, dtype=float)
    return MeanCheck(float(s.mean()), float(s.std(ddof=1) / math.sqrt(s.size)), l.mean())


def root_by_continuity(l: LevyData, a: float, k: int, steps: int = 256) -> complex:
    """k-th root of the characteristic function at a, following its phase from 0."""
    path = np.linspace(0.0, a, steps + 1)
    vals = np.array([char_fn_analytic(l, t) for t in path])
    phase = np.unwrap(np.angle(vals))
    return complex(np.abs(vals[-1]) ** (1.0 / k) * np.exp(1j * phase[-1] / k))


def divisibility_probe(l: LevyData, grid: Sequence[float], k: int) -> float:
    """max_a |φ_{μ/k}(a) − (φ_μ(a))^{1/k}|, root branch tracked by continuity."""
    part = l.scaled(1.0 / k)
    return max(abs(char_fn_analytic(part, a) - root_by_continuity(l, a, k)) for a in grid)


def hermitian_residual(l: LevyData, grid: Sequence[float]) -> float:
    return max(abs(char_fn_analytic(l, -a) - np.conj(char_fn_analytic(l, a))) for a in grid)
