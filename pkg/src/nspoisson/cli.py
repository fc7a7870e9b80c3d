"""Scenario runner that turns a YAML scenario into a JSON or CSV report.

Exit codes: 0 when every check passes, 1 when any check fails, 2 on a
configuration or output error.

CSV output (``--format csv``) writes ``<scenario>.csv`` with the columns

    check, label, record, estimate, target, se, tol, z, residual, verdict

and one ``<scenario>.<table>.csv`` per auxiliary table, e.g.
``zero_type_profile`` with columns (g, norm, term).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np
import scipy
import yaml

from . import __version__
from .coherent import (TestFunction, abs_exp_identity_batch, bump, indicator, inner_product_mc,
                       weyl_koopman_batch, affine_apply, zero_function, exp_eval_batch, mean_and_se)
from .constructions import (bernoulli_dissipativity, bernoulli_norm_check, bernoulli_tail,
                            bernoulli_total, bernoulli_variance, build_bernoulli_example,
                            build_propT_action, odometer_flip_enumeration,
                            odometer_flip_probability, propT_integrability_report,
                            sample_bernoulli)
from .dynamics import (KappaMeasure, dissipativity_from_norms, dissipativity_score, entropy,
                       entropy_aut1_form, koopman_overlap_mc, stationarity_defect, zero_type_profile)
from .errors import ArgumentError, ConfigError
from .infdiv import (LevyData, MIN_SAMPLES, compare_char_fn, divisibility_probe,
                     hermitian_residual, id_mean_check)
from .measure import BaseMeasure, Window, exp_decay, hull_of, lebesgue, piecewise, weighted_line
from .nsmap import (ActionZ, NsMap, chi, compose, identity_map, inverse_map, make_dilation,
                    make_density_map, make_swap, make_translation, swap_action, translation_action)
from .process import count_moments, sample_batch
from .suspension import (DEEP_EPS, DensityRatio, expected_log_rn, log_rn_extended_batch,
                         log_rn_limit_batch, log_rn_product_batch, log_rn_suspension_batch,
                         rn_consistency_test, stochastic_integral_batch)

SCHEMA_VERSION = 1
Z_GATE = 4.0
NONNEG_TOL = 1e-15
TAIL_PROBE = 1e6
EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
RECORD_COLUMNS = ("check", "label", "record", "estimate", "target", "se", "tol", "z", "residual",
                  "verdict")
SCENARIO_KEYS = {"schema_version", "name", "description", "seed", "checks"}
CHECK_KEYS = {"check", "label", "params"}


# -- report records ----------------------------------------------------------------------

@dataclass(frozen=True)
class Record:
    """One comparison.

    ``mode`` is "z" (|z| ≤ Z_GATE), "residual" or "upper" (residual ≤ tol),
    "lower" (estimate ≥ target − tol), "positive" (estimate > target) or
    "match" (estimate equals the target or is one of the listed targets).
    """

    name: str
    estimate: object
    target: object
    mode: str
    se: float | None = None
    tol: float | None = None
    z: float | None = None
    residual: float | None = None

    @property
    def passed(self) -> bool:
        if self.mode == "z":
            return self.z is not None and abs(self.z) <= Z_GATE
        if self.mode in ("residual", "upper", "lower"):
            return self.residual is not None and self.residual <= (self.tol or 0.0)
        if self.mode == "positive":
            return self.estimate > self.target
        return self.estimate in self.target if isinstance(self.target, (list, tuple)) \
            else self.estimate == self.target

    def as_dict(self) -> dict:
        return {"name": self.name, "estimate": _plain(self.estimate), "target": _plain(self.target),
                "mode": self.mode, "se": _plain(self.se), "tol": _plain(self.tol),
                "z": _plain(self.z), "residual": _plain(self.residual),
                "verdict": "pass" if self.passed else "fail"}


def stochastic(name, estimate, target, se, z=None) -> Record:
    if z is None:
        diff = estimate - target
        z = diff / se if se > 0 else (0.0 if diff == 0 else math.inf)
    return Record(name, estimate, target, "z", se=se, z=float(z))


def deterministic(name, estimate, target, tol, residual=None) -> Record:
    if residual is None:
        residual = abs(estimate - target)
    residual = float(residual) if math.isfinite(residual) else math.inf
    return Record(name, estimate, target, "residual", tol=tol, residual=residual)


def upper(name, estimate, limit, se=0.0, tol=0.0) -> Record:
    """Passes when estimate ≤ limit + Z_GATE·se + tol."""
    return Record(name, estimate, limit, "upper", se=se, tol=Z_GATE * se + tol,
                  residual=float(estimate - limit))


def lower(name, estimate, limit, tol=0.0) -> Record:
    return Record(name, estimate, limit, "lower", tol=tol, residual=float(limit - estimate))


def positive(name, estimate, limit=0.0) -> Record:
    return Record(name, estimate, limit, "positive", residual=float(limit - estimate))


def match(name, estimate, target) -> Record:
    return Record(name, estimate, target, "match")


def _plain(v):
    """JSON-safe value: complex as [re, im], non-finite floats as strings."""
    if v is None or isinstance(v, (bool, str)):
        return v
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (complex, np.complexfloating)):
        return [_plain(float(v.real)), _plain(float(v.imag))]
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


@dataclass
class CheckOutput:
    records: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # name -> (columns, rows)


# -- config parsing helpers ------------------------------------------------------------------

def _num(v, what: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{what} must be a number, got {v!r}")
    return float(v)


def _int(v, what: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{what} must be an integer, got {v!r}")
    return v


def _window(v, what: str = "window") -> Window:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ConfigError(f"{what} must be a [lo, hi] pair, got {v!r}")
    lo, hi = _num(v[0], what), _num(v[1], what)
    if not lo < hi:
        raise ConfigError(f"{what} needs lo < hi, got {v!r}")
    return Window(lo, hi)


def _build_kind(v, kinds: dict, what: str):
    """Dispatch a {kind: ..., ...} mapping (or a bare kind name) to a builder."""
    if isinstance(v, str):
        v = {"kind": v}
    if not isinstance(v, dict) or "kind" not in v:
        raise ConfigError(f"{what} must be a mapping with a 'kind' key, got {v!r}")
    kind = v["kind"]
    if kind not in kinds:
        raise ConfigError(f"unknown {what} kind {kind!r}; known: {sorted(kinds)}")
    allowed, build = kinds[kind]
    extra = set(v) - {"kind"} - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)} for {what} kind {kind!r}")
    missing = [k for k, default in allowed.items() if default is REQUIRED and k not in v]
    if missing:
        raise ConfigError(f"{what} kind {kind!r} is missing {missing}")
    args = {k: v.get(k, d) for k, d in allowed.items()}
    try:
        return build(**args)
    except ArgumentError as exc:
        raise ConfigError(f"bad {what} {v!r}: {exc}") from exc


REQUIRED = object()


def _measure(v) -> BaseMeasure:
    return _build_kind(v, {
        "lebesgue": ({}, lambda: lebesgue()),
        "weighted_line": ({}, lambda: weighted_line()),
        "exp_decay": ({"rate": 1.0}, lambda rate: exp_decay(_num(rate, "rate"))),
        "piecewise": ({"edges": REQUIRED, "densities": REQUIRED},
                      lambda edges, densities: piecewise([_num(e, "edge") for e in edges],
                                                         [_num(d, "density") for d in densities])),
    }, "measure")


def _scalar(v, what: str):
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(_num(v[0], what), _num(v[1], what))
    return _num(v, what)


def _function(v) -> TestFunction:
    return _build_kind(v, {
        "indicator": ({"window": REQUIRED, "value": 1.0},
                      lambda window, value: indicator(_window(window), _scalar(value, "value"))),
        "bump": ({"window": REQUIRED, "amplitude": 1.0, "shift": 0.0},
                 lambda window, amplitude, shift: bump(_window(window), _num(amplitude, "amplitude"),
                                                       _num(shift, "shift"))),
        "zero": ({"window": REQUIRED}, lambda window: zero_function(_window(window))),
    }, "function")


def _exp_bump_ratio(window, amplitude) -> DensityRatio:
    w, a = _window(window), _num(amplitude, "amplitude")
    f = bump(w, a)
    return DensityRatio(lambda x: np.exp(f(x)), w, label=f"exp(bump({a:g}))")


def _ratio(v, m: BaseMeasure) -> DensityRatio:
    from .suspension import constant_ratio
    return _build_kind(v, {
        "constant": ({"window": REQUIRED, "value": REQUIRED},
                     lambda window, value: constant_ratio(_window(window), _num(value, "value"))),
        "exp_bump": ({"window": REQUIRED, "amplitude": REQUIRED}, _exp_bump_ratio),
        "map": ({"map": REQUIRED}, lambda map: DensityRatio.from_map(_map(map, m))),
    }, "ratio")


def _map(v, m: BaseMeasure) -> NsMap:
    def density(window, value):
        w, c = _window(window), _num(value, "value")
        return make_density_map(lambda x: np.full(np.shape(x), c), w, m, label=f"density({c:g})")

    return _build_kind(v, {
        "identity": ({}, identity_map),
        "translation": ({"t": REQUIRED}, lambda t: make_translation(_num(t, "t"), m)),
        "swap": ({"A": REQUIRED, "B": REQUIRED},
                 lambda A, B: make_swap(_window(A, "A"), _window(B, "B"), m)),
        "density": ({"window": REQUIRED, "value": REQUIRED}, density),
        "dilation": ({"c": REQUIRED}, lambda c: make_dilation(_num(c, "c"))),
        "inverse": ({"map": REQUIRED}, lambda map: inverse_map(_map(map, m))),
        "compose": ({"first": REQUIRED, "second": REQUIRED},
                    lambda first, second: compose(_map(first, m), _map(second, m))),
    }, "map")


def _action(v, m: BaseMeasure) -> ActionZ:
    def density(window, value):
        return ActionZ(_map({"kind": "density", "window": window, "value": value}, m),
                       cache_range=2, label=f"density({value})")

    return _build_kind(v, {
        "identity": ({}, lambda: ActionZ(identity_map(), power=lambda g: identity_map(),
                                         label="identity")),
        "translation": ({"t": 1.0}, lambda t: translation_action(_num(t, "t"), m)),
        "swap": ({"A": REQUIRED, "B": REQUIRED},
                 lambda A, B: swap_action(_window(A, "A"), _window(B, "B"), m)),
        "density": ({"window": REQUIRED, "value": REQUIRED}, density),
    }, "action")


def _kappa(v) -> KappaMeasure:
    if v is None:
        return KappaMeasure.symmetric_pm()
    if not isinstance(v, dict) or set(v) - {"support", "weights"}:
        raise ConfigError(f"kappa must be a mapping with support and weights, got {v!r}")
    try:
        return KappaMeasure(tuple(_int(g, "kappa support") for g in v["support"]),
                            tuple(_num(w, "kappa weight") for w in v["weights"]))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad kappa: {exc}") from exc


def _grid(v) -> list[float]:
    if isinstance(v, dict):
        if set(v) != {"lo", "hi", "n"}:
            raise ConfigError("grid mapping needs exactly lo, hi, n")
        return np.linspace(_num(v["lo"], "lo"), _num(v["hi"], "hi"), _int(v["n"], "n")).tolist()
    return [_num(a, "grid point") for a in v]


# -- checks -------------------------------------------------------------------------------------

def check_poisson_counts(p, seed) -> CheckOutput:
    m = _measure(p["measure"])
    out = CheckOutput()
    for i, mass in enumerate(p["masses"]):
        mass = _num(mass, "mass")
        hi = float(np.atleast_1d(m.solve_cumulative(0.0, [mass]))[0])
        w = Window(0.0, hi)
        counts = sample_batch(m, w, p["trials"], seed + i).counts()
        cm = count_moments(counts, m.mass(w))
        tag = f"mass={mass:.6g}"
        out.records += [stochastic(f"{tag} mean", cm.mean, cm.mass, cm.mean_se),
                        stochastic(f"{tag} variance", cm.var, cm.mass, cm.var_se),
                        stochastic(f"{tag} void", cm.void, math.exp(-cm.mass), cm.void_se)]
    return out


def check_exponential_relation(p, seed) -> CheckOutput:
    m = _measure(p["measure"])
    out = CheckOutput()
    for i, pair in enumerate(p["pairs"]):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError("each pair must list two functions")
        f, g = _function(pair[0]), _function(pair[1])
        est = inner_product_mc(f, g, p["trials"], seed + i, m)
        out.records.append(stochastic(f"<Exp {f.label}, Exp {g.label}>", est.estimate, est.target,
                                      est.se, z=est.z))
    return out


def check_normalization(p, seed) -> CheckOutput:
    m = _measure(p["measure"])
    out = CheckOutput()
    for i, item in enumerate(p["ratios"]):
        d = _ratio(item, m)
        batch = sample_batch(m, d.support, p["trials"], seed + i)
        est, se = mean_and_se(exp_eval_batch(d.minus_one(), batch, m))
        out.records.append(stochastic(f"E Exp({d.label}-1)", est, 1.0, se))
    return out


def check_abs_identity(p, seed) -> CheckOutput:
    m = _measure(p["measure"])
    phi = _function(p["function"])
    batch = sample_batch(m, phi.support, p["paths"], seed)
    rep = abs_exp_identity_batch(phi, batch, m)
    below = float(np.min(phi(np.linspace(phi.support.lo, phi.support.hi, 1001))))
    return CheckOutput([deterministic(f"|Exp {phi.label}| relative residual", rep.max_rel_diff, 0.0,
                                      p["tol"]),
                        positive("depth of phi below -1", -1.0 - below)])


def check_rn_identification(p, seed) -> CheckOutput:
    m = _measure(p["measure"])
    windows = [_window(w) for w in p["windows"]]
    out = CheckOutput()
    for i, item in enumerate(p["ratios"]):
        d = _ratio(item, m)
        for r in rn_consistency_test(d, windows, p["trials"], seed + 2 * i, m):
            tag = "" if r.window is None else f" {list(r.window)}"
            out.records.append(stochastic(f"{d.label} {r.name}{tag}", r.estimate, r.target, r.se))
    return out


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(np.expm1(a - b)))) if a.size else 0.0


def check_rn_cross_formula(p, seed) -> CheckOutput:
    """Pairwise agreement of the product form of log (T_*)′ with its other two forms, per path."""
    m = _measure(p["measure"])
    out = CheckOutput()
    items = [("map", s) for s in p["maps"]] + [("ratio", s) for s in p["ratios"]]
    for i, (kind, item) in enumerate(items):
        if kind == "map":
            T = _map(item, m)
            d = DensityRatio.from_map(T)
        else:
            T, d = None, _ratio(item, m)
        batch = sample_batch(m, d.support, p["paths"], seed + i)
        prod = log_rn_suspension_batch(T, batch, m) if T is not None \
            else log_rn_product_batch(d, batch, m)
        ext = log_rn_extended_batch(d, batch, m)
        lim = log_rn_limit_batch(d, batch, m, DEEP_EPS, p["limit_tol"]).value
        out.records += [
            deterministic(f"{d.label} product vs extended", _rel(prod, ext), 0.0, p["tol"]),
            deterministic(f"{d.label} product vs limit", _rel(prod, lim), 0.0, p["tol"]),
            deterministic(f"{d.label} extended vs limit", _rel(ext, lim), 0.0, p["tol"]),
        ]
    return out


def check_infdiv_charfn(p, seed) -> CheckOutput:
    m = _measure(p["measure"])
    d = _ratio(p["ratio"], m)
    levy = LevyData.from_ratio(d, m)
    batch = sample_batch(m, d.support, p["samples"], seed)
    samples = log_rn_limit_batch(d, batch, m, DEEP_EPS, p["limit_tol"]).value
    out = CheckOutput()
    for r in compare_char_fn(levy, samples, _grid(p["grid"])):
        out.records.append(stochastic(f"cf a={r.a:+.3f}", r.empirical, r.analytic, r.se, z=r.z))
    mc = id_mean_check(levy, samples)
    target = expected_log_rn(d, m)
    out.records += [stochastic("mean log RN", mc.estimate, target, mc.se),
                    deterministic("Levy mean vs -int(phi-1-log phi)", levy.mean(), target, p["tol"])]
    grid = _grid(p["grid"])
    for k in p["divisibility"]:
        out.records.append(deterministic(f"divisibility k={k}", divisibility_probe(levy, grid, k),
                                         0.0, p["tol"]))
    out.records.append(deterministic("hermitian symmetry", hermitian_residual(levy, grid), 0.0,
                                     p["tol"]))
    return out


def check_stochastic_integral_mean(p, seed) -> CheckOutput:
    m = _measure(p["measure"])
    out = CheckOutput()
    for i, item in enumerate(p["functions"]):
        f = _function(item)
        batch = sample_batch(m, f.support, p["trials"], seed + i)
        vals = stochastic_integral_batch(f, batch, m, DEEP_EPS, p["limit_tol"]).value
        est, se = mean_and_se(vals)
        out.records.append(stochastic(f"E I({f.label})", est, LevyData(m, f).mean(), se))
    return out


def check_weyl_identity(p, seed) -> CheckOutput:
    m = _measure(p["measure"])
    out = CheckOutput()
    i = 0
    for mspec in p["maps"]:
        T = _map(mspec, m)
        for fspec in p["functions"]:
            f = _function(fspec)
            A = affine_apply(T, f, m)
            region = hull_of([A.support, f.support, T.preimage_hull(A.support)])
            batch = sample_batch(m, region, p["paths"], seed + i)
            rep = weyl_koopman_batch(T, f, batch, m)
            out.records.append(deterministic(f"{T.label} on Exp {f.label}", rep.max_rel_diff, 0.0,
                                             p["tol"]))
            i += 1
    return out


def _translation_chi_target(m: BaseMeasure, t: float) -> float:
    """χ(T_{−t}) = ∫(ρ(x+t) − ρ(x))dx = t(ρ(+∞) − ρ(−∞)) for densities with flat tails."""
    far = float(TAIL_PROBE)
    lo, hi = (float(np.asarray(m.density(np.array([x])))[0]) for x in (-far, far))
    return t * (hi - lo)


def check_chi(p, seed) -> CheckOutput:
    m = _measure(p["measure"])
    out = CheckOutput()
    for t in p["t_values"]:
        t = _num(t, "t")
        out.records.append(deterministic(f"chi(T_-{t:g})", chi(make_translation(-t, m), m),
                                         _translation_chi_target(m, t), p["tol"]))
    for item in p["conservative"]:
        T = _map(item, m)
        out.records.append(deterministic(f"chi({T.label})", chi(T, m), 0.0, p["tol"]))
    for pair in p["compose_pairs"]:
        S, T = _map(pair[0], m), _map(pair[1], m)
        out.records.append(deterministic(f"chi({S.label} then {T.label}) additivity",
                                         chi(compose(S, T), m), chi(S, m) + chi(T, m), p["tol"]))
    return out


def check_entropy(p, seed) -> CheckOutput:
    m = _measure(p["measure"])
    out = CheckOutput()
    for case in p["cases"]:
        if not isinstance(case, dict) or set(case) - {"action", "kappa", "expect_zero", "expect"}:
            raise ConfigError(f"entropy case keys are action, kappa, expect_zero, expect; got {case!r}")
        a = _action(case["action"], m)
        k = _kappa(case.get("kappa"))
        h = entropy(a, k, m)
        tag = a.label
        out.records.append(lower(f"{tag} nonnegative", h, 0.0, tol=NONNEG_TOL))
        if case.get("expect_zero"):
            out.records.append(deterministic(f"{tag} zero", h, 0.0, p["tol"]))
        if case.get("expect") is not None:
            out.records.append(deterministic(f"{tag} closed form", h, _num(case["expect"], "expect"),
                                             p["tol"]))
        for t in p["scales"]:
            t = _num(t, "scale")
            out.records.append(deterministic(f"{tag} scaling t={t:g}", entropy(a, k, m.scaled(t)),
                                             t * h, p["tol"]))
        out.records.append(deterministic(f"{tag} Aut1 form", entropy_aut1_form(a, k, m), h, p["tol"]))
        if k.symmetric or a.conservative:
            out.records.append(deterministic(f"{tag} simplified Aut1 form",
                                             entropy_aut1_form(a, k, m, simplified=True), h, p["tol"]))
    return out


def check_dissipativity(p, seed) -> CheckOutput:
    m = _measure(p["measure"])
    out = CheckOutput()
    t = _num(p["t"], "t")
    a = translation_action(t, m)
    gs = list(range(-p["g_max"], p["g_max"] + 1))
    rep = dissipativity_score(a, gs, m)
    rate = 0.5 * (math.sqrt(2.0) - 1.0) ** 2 * abs(t)
    closed = [math.exp(-rate * abs(g)) for g in gs]
    out.records.append(deterministic("translation terms vs closed form",
                                     max(abs(x - y) for x, y in zip(rep.terms, closed)), 0.0, p["tol"]))
    q = math.exp(-rate)
    geo = 1.0 + 2.0 * q * (1.0 - q ** p["g_max"]) / (1.0 - q)
    out.records += [deterministic("translation partial sum vs geometric", rep.partial_sums[-1], geo,
                                  p["tol"]),
                    match("translation verdict", rep.verdict, ["summable", "convergent"]),
                    match("translation partial sums monotone", rep.monotone, True)]
    ident = dissipativity_from_norms(gs, [0.0] * len(gs))
    out.records.append(match("identity action verdict", ident.verdict, "divergent"))
    b = bernoulli_dissipativity(p["bernoulli_n_max"])
    out.records += [match("bernoulli partial sums monotone", b.report.monotone, True),
                    match("bernoulli verdict", b.report.verdict, ["summable", "convergent"]),
                    positive("bernoulli lower-bound constant", b.lower_bound_constant)]
    prof = zero_type_profile(a, range(-p["g_max"], p["g_max"] + 1), m)
    out.tables["zero_type_profile"] = (("g", "norm", "term"),
                                      [(g, n, math.exp(-0.5 * n * n)) for g, n in zip(prof.g, prof.norms)])
    out.tables["bernoulli_partial_sums"] = (
        ("radius", "partial_sum"), [(r, s) for r, s in enumerate(b.report.partial_sums)])
    window = _window(p["overlap_window"])
    for i, g in enumerate(p["overlap_g"]):
        est = koopman_overlap_mc(a, g, m, window, p["trials"], seed + i)
        out.records.append(stochastic(f"<U 1, 1> g={g}", est.estimate, est.target, est.se))
    return out


def check_stationarity(p, seed) -> CheckOutput:
    m = _measure(p["measure"])
    out = CheckOutput()
    windows = [_window(w) for w in p["windows"]]
    for i, case in enumerate(p["cases"]):
        if not isinstance(case, dict) or set(case) - {"action", "kappa", "preserving"}:
            raise ConfigError(f"stationarity case keys are action, kappa, preserving; got {case!r}")
        a = _action(case["action"], m)
        rep = stationarity_defect(a, _kappa(case.get("kappa")), m, windows, p["trials"], seed + 97 * i)
        if case.get("preserving"):
            out.records.append(deterministic(f"{a.label} defect", rep.defect, 0.0, p["tol"]))
        else:
            out.records.append(positive(f"{a.label} defect", rep.defect))
        for r in rep.records:
            tag = f"{a.label} {list(r.window)}"
            out.records.append(stochastic(f"{tag} mixed void", r.mc_mixed_void, r.mixed_void, r.mc_se))
            out.records.append(lower(f"{tag} Jensen gap", r.jensen_gap, 0.0, tol=NONNEG_TOL))
            if r.defect > p["tol"]:
                out.records.append(positive(f"{tag} void witness", abs(r.void_gap)))
    return out


def check_bernoulli_norms(p, seed) -> CheckOutput:
    c = build_bernoulli_example(p["levels"], max(p["shifts"]))
    sample = sample_bernoulli(c, p["trials"], seed, max(p["shifts"]))
    out = CheckOutput()
    rows = []
    for n in p["shifts"]:
        rep = bernoulli_norm_check(c, n, p["trials"], seed, sample=sample, max_level=p["max_level"])
        for r in rep.levels:
            out.records.append(stochastic(f"k={r.k} n={n}", r.estimate, r.target, r.model_se, z=r.z))
            rows.append((r.k, n, r.estimate, r.empirical_se, r.model_se, r.target))
        t = rep.total
        out.records.append(stochastic(f"total K={c.levels} n={n}", t.estimate, t.target, t.model_se,
                                      z=t.z))
        out.records.append(upper(f"truncation n={n}", rep.series_total - t.target,
                                 2.0 * n * bernoulli_tail(c.levels), tol=1e-12))
    out.records += [deterministic("closed form k=1 n=2", bernoulli_variance(1, 2), 3.0, 1e-12),
                    deterministic("n=0 total", bernoulli_total(0), 0.0, 0.0)]
    out.tables["bernoulli_norms"] = (("k", "n", "estimate", "empirical_se", "model_se", "closed_form"),
                                     rows)
    return out


def check_propT(p, seed) -> CheckOutput:
    k = _kappa(p["kappa"])
    c = build_propT_action(p["levels"], k)
    rep = propT_integrability_report(c, p["g_range"], p["trials"], seed, scales=p["scales"])
    out = CheckOutput()
    for n, est, se, target in rep.block_probs:
        out.records.append(stochastic(f"P(B_{n})", est, target, se))
    for n in range(1, 4):
        cc = c.coordinate_levels[n - 1]
        g = c.radii[n - 1]
        out.records.append(deterministic(f"odometer flip n={n} g={g}", odometer_flip_enumeration(cc, g),
                                         odometer_flip_probability(cc, g), 0.0))
    for r in rep.records:
        if r.g == 0:
            out.records.append(deterministic("g=0 defects", r.l1 + r.abs_log + abs(r.entropy_term),
                                             0.0, 0.0))
            continue
        out.records += [upper(f"L1 g={r.g}", r.l1, r.l1_majorant),
                        upper(f"|log T'| g={r.g}", r.abs_log, r.log_majorant),
                        lower(f"entropy term g={r.g} nonnegative", r.entropy_term, 0.0, tol=NONNEG_TOL)]
    out.records.append(upper("entropy <= 1", rep.entropy, 1.0, se=rep.entropy_se))
    for t, h in rep.scaled_entropy:
        out.records.append(deterministic(f"entropy scaling t={t:g}", h, t * rep.entropy, 1e-12))
    return out


@dataclass(frozen=True)
class CheckSpec:
    run: Callable
    defaults: dict
    trial_floor: dict  # trial-count key -> minimum after scaling


_WL = "weighted_line"
CHECKS: dict[str, CheckSpec] = {
    "poisson_counts": CheckSpec(check_poisson_counts,
                                {"measure": "lebesgue", "masses": REQUIRED, "trials": 100000},
                                {"trials": 2}),
    "exponential_relation": CheckSpec(check_exponential_relation,
                                      {"measure": "lebesgue", "pairs": REQUIRED, "trials": 100000},
                                      {"trials": 2}),
    "normalization": CheckSpec(check_normalization,
                               {"measure": "lebesgue", "ratios": REQUIRED, "trials": 100000},
                               {"trials": 2}),
    "abs_identity": CheckSpec(check_abs_identity,
                              {"measure": "lebesgue", "function": REQUIRED, "paths": 1000, "tol": 1e-9},
                              {"paths": 1}),
    "rn_identification": CheckSpec(check_rn_identification,
                                   {"measure": "lebesgue", "ratios": REQUIRED, "windows": REQUIRED,
                                    "trials": 100000}, {"trials": 2}),
    "rn_cross_formula": CheckSpec(check_rn_cross_formula,
                                  {"measure": _WL, "maps": [], "ratios": [], "paths": 1000,
                                   "tol": 1e-8, "limit_tol": 1e-10}, {"paths": 1}),
    "infdiv_charfn": CheckSpec(check_infdiv_charfn,
                               {"measure": "lebesgue", "ratio": REQUIRED, "samples": 100000,
                                "grid": {"lo": -3.0, "hi": 3.0, "n": 25}, "limit_tol": 1e-9,
                                "divisibility": [2, 3], "tol": 1e-8},
                               {"samples": MIN_SAMPLES}),
    "stochastic_integral_mean": CheckSpec(check_stochastic_integral_mean,
                                          {"measure": "lebesgue", "functions": REQUIRED,
                                           "trials": 100000, "limit_tol": 1e-9}, {"trials": 2}),
    "weyl_identity": CheckSpec(check_weyl_identity,
                               {"measure": _WL, "maps": REQUIRED, "functions": REQUIRED,
                                "paths": 1000, "tol": 1e-9}, {"paths": 1}),
    "chi": CheckSpec(check_chi, {"measure": _WL, "t_values": [], "conservative": [],
                                 "compose_pairs": [], "tol": 1e-8}, {}),
    "entropy": CheckSpec(check_entropy, {"measure": _WL, "cases": REQUIRED,
                                         "scales": [0.5, 2.0, 5.0], "tol": 1e-8}, {}),
    "dissipativity": CheckSpec(check_dissipativity,
                               {"measure": _WL, "t": 1.0, "g_max": 64, "tol": 1e-8,
                                "bernoulli_n_max": 64, "overlap_g": [1, 2, 4],
                                "overlap_window": [-8.0, 8.0], "trials": 100000}, {"trials": 2}),
    "stationarity": CheckSpec(check_stationarity,
                              {"measure": _WL, "cases": REQUIRED, "windows": REQUIRED,
                               "trials": 100000, "tol": 1e-10}, {"trials": 2}),
    "bernoulli_norms": CheckSpec(check_bernoulli_norms,
                                 {"levels": 8, "max_level": 6, "shifts": [1, 2, 4, 8, 16, 32],
                                  "trials": 100000}, {"trials": 2}),
    "propT": CheckSpec(check_propT, {"levels": 12, "g_range": [-2, -1, 0, 1, 2], "kappa": None,
                                     "trials": 100000, "scales": [0.5, 2.0, 5.0]}, {"trials": 2}),
}


# -- scenarios -------------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckConfig:
    check: str
    label: str
    params: dict


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    checks: tuple[CheckConfig, ...]
    description: str = ""


def bundled_dir():
    return resources.files("nspoisson") / "scenarios"


def bundled_scenarios() -> list[str]:
    return sorted(p.name[:-5] for p in bundled_dir().iterdir() if p.name.endswith(".yaml"))


def resolve_config(ref: str) -> tuple[str, str]:
    """(source text, display path) for a file path or a bundled scenario name."""
    path = Path(ref)
    if path.is_file():
        return path.read_text(), str(path)
    res = bundled_dir() / f"{ref}.yaml"
    if res.is_file():
        return res.read_text(), f"<bundled>/{ref}.yaml"
    raise ConfigError(f"no scenario file or bundled scenario named {ref!r}")


def parse_scenario(text: str) -> Scenario:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"scenario is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a mapping")
    extra = set(raw) - SCENARIO_KEYS
    if extra:
        raise ConfigError(f"unknown scenario keys {sorted(extra)}")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    for key in ("name", "seed", "checks"):
        if key not in raw:
            raise ConfigError(f"scenario is missing {key!r}")
    name = raw["name"]
    if not isinstance(name, str) or not name:
        raise ConfigError("scenario name must be a nonempty string")
    seed = _int(raw["seed"], "seed")
    if not isinstance(raw["checks"], list) or not raw["checks"]:
        raise ConfigError("checks must be a nonempty list")
    checks, labels = [], set()
    for item in raw["checks"]:
        if not isinstance(item, dict) or "check" not in item:
            raise ConfigError(f"each check needs a 'check' key, got {item!r}")
        extra = set(item) - CHECK_KEYS
        if extra:
            raise ConfigError(f"unknown check keys {sorted(extra)}")
        cname = item["check"]
        if cname not in CHECKS:
            raise ConfigError(f"unknown check {cname!r}; known: {sorted(CHECKS)}")
        params = item.get("params") or {}
        if not isinstance(params, dict):
            raise ConfigError(f"params of {cname} must be a mapping")
        registered = CHECKS[cname]
        extra = set(params) - set(registered.defaults)
        if extra:
            raise ConfigError(f"unknown params {sorted(extra)} for check {cname}")
        merged = {k: params.get(k, d) for k, d in registered.defaults.items()}
        missing = [k for k, v in merged.items() if v is REQUIRED]
        if missing:
            raise ConfigError(f"check {cname} is missing params {missing}")
        for key in registered.trial_floor:
            _int(merged[key], f"{cname}.{key}")
        label = str(item.get("label", cname))
        if label in labels:
            raise ConfigError(f"duplicate check label {label!r}")
        labels.add(label)
        checks.append(CheckConfig(cname, label, merged))
    return Scenario(name, seed, tuple(checks), str(raw.get("description", "")))


def check_seed(seed: int, index: int) -> int:
    """Independent per-check seed derived from the scenario seed."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _scaled_params(cfg: CheckConfig, scale: float) -> dict:
    p = dict(cfg.params)
    for key, floor in CHECKS[cfg.check].trial_floor.items():
        p[key] = max(floor, int(round(p[key] * scale)))
    return p


def run_scenario(sc: Scenario, seed: int | None = None, trials_scale: float = 1.0,
                 log=None, timings: dict | None = None) -> dict:
    """Run every check in declared order and assemble the report mapping.

    Wall-clock times go to ``log`` and ``timings`` only, never into the report.
    """
    seed = sc.seed if seed is None else seed
    checks = []
    for i, cfg in enumerate(sc.checks):
        s = check_seed(seed, i)
        t0 = time.perf_counter()
        try:
            res = CHECKS[cfg.check].run(_scaled_params(cfg, trials_scale), s)
            error = None
        except ConfigError:
            raise
        except Exception as exc:  # numeric failures become failing checks
            res, error = CheckOutput(), f"{type(exc).__name__}: {exc}"
        elapsed = time.perf_counter() - t0
        if timings is not None:
            timings[cfg.label] = elapsed
        if log is not None:
            log(f"{sc.name}/{cfg.label}: {elapsed:.2f} s")
        ok = error is None and all(r.passed for r in res.records)
        entry = {"check": cfg.check, "label": cfg.label, "seed": s,
                 "records": [r.as_dict() for r in res.records],
                 "tables": {k: {"columns": list(cols), "rows": [[_plain(v) for v in row] for row in rows]}
                            for k, (cols, rows) in sorted(res.tables.items())},
                 "verdict": "pass" if ok else "fail"}
        if error is not None:
            entry["error"] = error
        checks.append(entry)
    return {"schema_version": SCHEMA_VERSION, "scenario": sc.name, "seed": seed,
            "trials_scale": trials_scale,
            "provenance": {"nspoisson": __version__, "numpy": np.__version__,
                           "scipy": scipy.__version__, "python": platform.python_version()},
            "checks": checks,
            "verdict": "pass" if all(c["verdict"] == "pass" for c in checks) else "fail"}


# -- emission and validation ---------------------------------------------------------------------

def to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def to_csv_tables(report: dict) -> dict[str, str]:
    """File suffix -> CSV text; "" is the record table."""
    out = {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for c in report["checks"]:
        for r in c["records"]:
            w.writerow([c["check"], c["label"], r["name"], *(_cell(r[k]) for k in
                        ("estimate", "target", "se", "tol", "z", "residual")), r["verdict"]])
    out[""] = buf.getvalue()
    for c in report["checks"]:
        for name, tab in c["tables"].items():
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(tab["columns"])
            w.writerows([[_cell(v) for v in row] for row in tab["rows"]])
            out[name if len(report["checks"]) == 1 else f"{c['label']}.{name}"] = buf.getvalue()
    return out


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, list):
        return " ".join(str(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


MODES = ("z", "residual", "upper", "lower", "positive", "match")
REPORT_KEYS = {"schema_version", "scenario", "seed", "trials_scale", "provenance", "checks", "verdict"}
CHECK_ENTRY_KEYS = {"check", "label", "seed", "records", "tables", "verdict"}
RECORD_KEYS = {"name", "estimate", "target", "mode", "se", "tol", "z", "residual", "verdict"}


def validate_report(report) -> list[str]:
    """Structural problems of a report mapping; empty when valid."""
    errs = []
    if not isinstance(report, dict):
        return ["report must be a mapping"]
    if set(report) != REPORT_KEYS:
        errs.append(f"top-level keys {sorted(report)} differ from {sorted(REPORT_KEYS)}")
    if report.get("schema_version") != SCHEMA_VERSION:
        errs.append("unsupported schema_version")
    checks = report.get("checks")
    if not isinstance(checks, list):
        return errs + ["checks must be a list"]
    all_pass = True
    for i, c in enumerate(checks):
        keys = set(c) - {"error"}
        if keys != CHECK_ENTRY_KEYS:
            errs.append(f"check {i}: keys {sorted(c)}")
            continue
        if c["check"] not in CHECKS:
            errs.append(f"check {i}: unknown check {c['check']!r}")
        ok = "error" not in c
        for j, r in enumerate(c["records"]):
            if set(r) != RECORD_KEYS:
                errs.append(f"check {i} record {j}: keys {sorted(r)}")
                continue
            if r["verdict"] not in ("pass", "fail") or r["mode"] not in MODES:
                errs.append(f"check {i} record {j}: bad verdict or mode")
            ok &= r["verdict"] == "pass"
        if c["verdict"] != ("pass" if ok else "fail"):
            errs.append(f"check {i}: verdict inconsistent with its records")
        all_pass &= c["verdict"] == "pass"
        for name, tab in c["tables"].items():
            if set(tab) != {"columns", "rows"} or any(len(r) != len(tab["columns"]) for r in tab["rows"]):
                errs.append(f"check {i} table {name}: malformed")
    if report.get("verdict") != ("pass" if all_pass else "fail"):
        errs.append("report verdict inconsistent with its checks")
    return errs


def write_report(report: dict, out_dir: Path | None, fmt: str, stdout) -> list[Path]:
    name = report["scenario"]
    if fmt == "json":
        text = to_json(report)
        if out_dir is None:
            stdout.write(text)
            return []
        path = out_dir / f"{name}.json"
        path.write_text(text)
        return [path]
    tables = to_csv_tables(report)
    if out_dir is None:
        stdout.write(tables[""])
        return []
    paths = []
    for suffix, text in tables.items():
        path = out_dir / (f"{name}.csv" if not suffix else f"{name}.{suffix}.csv")
        path.write_text(text)
        paths.append(path)
    return paths


# -- entry point -------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nspoisson",
        description="Run verification scenarios for Poisson suspensions of nonsingular maps.",
        epilog="CSV record columns: " + ", ".join(RECORD_COLUMNS) + ". Auxiliary tables go to "
               "<scenario>.<table>.csv; zero_type_profile has columns g, norm, term.",
    )
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", action="append", metavar="PATH_OR_NAME",
                     help="scenario YAML file or bundled scenario name (repeatable)")
    src.add_argument("--all", action="store_true", help="run every bundled scenario")
    src.add_argument("--list", action="store_true", help="list bundled scenarios")
    src.add_argument("--validate", metavar="REPORT", help="validate a JSON report and exit")
    ap.add_argument("--seed", type=int, help="override the scenario seed")
    ap.add_argument("--trials-scale", type=float, default=1.0,
                    help="multiply every trial count (default 1)")
    ap.add_argument("--out-dir", type=Path, help="write reports here instead of stdout")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    ap.add_argument("--quiet", action="store_true", help="no timing lines on stderr")
    return ap


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    args = build_parser().parse_args(argv)
    if args.list:
        stdout.write("\n".join(bundled_scenarios()) + "\n")
        return EXIT_PASS
    if args.validate:
        try:
            report = json.loads(Path(args.validate).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            stderr.write(f"error: cannot read report: {exc}\n")
            return EXIT_CONFIG
        problems = validate_report(report)
        for msg in problems:
            stderr.write(f"invalid: {msg}\n")
        return EXIT_FAIL if problems else EXIT_PASS
    if not args.trials_scale > 0:
        stderr.write("error: --trials-scale must be positive\n")
        return EXIT_CONFIG
    refs = bundled_scenarios() if args.all else args.config
    try:
        scenarios = [parse_scenario(resolve_config(ref)[0]) for ref in refs]
    except ConfigError as exc:
        stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    if args.out_dir is not None:
        try:
            args.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            stderr.write(f"error: cannot create {args.out_dir}: {exc}\n")
            return EXIT_CONFIG
    log = None if args.quiet else (lambda msg: stderr.write(msg + "\n"))
    failed = False
    for sc in scenarios:
        t0 = time.perf_counter()
        try:
            report = run_scenario(sc, args.seed, args.trials_scale, log)
        except ConfigError as exc:
            stderr.write(f"config error in {sc.name}: {exc}\n")
            return EXIT_CONFIG
        try:
            write_report(report, args.out_dir, args.format, stdout)
        except OSError as exc:
            stderr.write(f"error: cannot write report: {exc}\n")
            return EXIT_CONFIG
        if log is not None:
            log(f"{sc.name}: {report['verdict']} in {time.perf_counter() - t0:.2f} s")
        failed |= report["verdict"] != "pass"
    return EXIT_FAIL if failed else EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
