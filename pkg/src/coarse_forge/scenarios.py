"""End-to-end scenarios with fixed parameters; shared by the demo runner and the acceptance suite.

Each scenario returns a :class:`ScenarioResult` whose ``passed`` flag is the
conjunction of its exact checks. Runtimes are measured but judged by callers.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .controls import ExpBase, InverseT, _bisect_min, affine, exp_base, step_table
from .diagram import Arrow, DiagramSpec, arrow_tables, brute_force_tuples, tuple_space
from .equalizer import equalizer_stability, kappa_equalizer
from .extdist import INF
from .hhs import (
    assemble_retraction,
    hhs_qi_certificate,
    lattice_family,
    nearest_even_retraction,
    realization_profile,
)
from .loader import BUILTIN_SPACES, builtin_space
from .metric_space import (
    ExplicitMatrix,
    Lattice,
    MapTable,
    box_window,
    inner_window,
    metric_preorder_check,
    path_graph,
    z_window,
)
from .rips import build_rips, build_weighted_rips, cgeodesic_certificate, shortcut_metric, surplus_weight_check


@dataclass
class ScenarioResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0


def _timed(fn):
    def run(*a, **kw):
        t0 = time.perf_counter()
        res = fn(*a, **kw)
        res.seconds = time.perf_counter() - t0
        return res

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


@_timed
def rips_closed_form(lo=-64, hi=64, sigmas=(1, 2, 3, 5)) -> ScenarioResult:
    """Rips distances on a Z window equal ``ceil(|x - y| / sigma)`` on inner pairs."""
    s = z_window(lo, hi)
    inner = inner_window(s)
    x = np.array(inner, dtype=np.int64)
    gap = np.abs(x[:, None] - x[None, :])
    detail = {}
    ok = True
    for sig in sigmas:
        d = build_rips(s, sig).pairwise(inner, inner)
        expect = -(-gap // sig)
        good = bool(d.finite.all() and d.den == 1 and np.array_equal(d.num, expect))
        detail[str(sig)] = good
        ok &= good
    return ScenarioResult("rips_closed_form", ok, detail)


def _image_cmp(rho, s: Fraction, t: Fraction) -> int:
    """Sign of ``rho(s) - rho(t)``, exact even where the values are irrational."""
    if isinstance(rho, ExpBase):
        return (s > t) - (s < t)
    a, b = rho.eval(s), rho.eval(t)
    return (a > b) - (a < b)


def _first_true(grid, pred) -> int:
    """Least index with ``pred`` true for a predicate monotone along ``grid``."""
    lo, hi = 0, len(grid)
    while lo < hi:
        mid = (lo + hi) // 2
        if pred(grid[mid]):
            hi = mid
        else:
            lo = mid + 1
    return lo


def duality_controls():
    return {
        "affine(1,0)": affine(1, 0),
        "affine(2,1)": affine(2, 1),
        "exp_base(2)": exp_base(2),
        "step5": step_table([(0, 0), (1, 1), (2, 3), (4, 4), (8, 10)], tail_slope=1),
    }


@_timed
def inverse_duality(points=1000, step=Fraction(1, 8)) -> ScenarioResult:
    """``rho^T(t) <= s <=> t <= rho(s)`` and the two sandwich inequalities on a rational grid."""
    grid = [k * step for k in range(points)]
    detail = {}
    ok = True
    for name, rho in duality_controls().items():
        g = InverseT(rho)
        good = True
        # rho is nondecreasing along the grid, so both sides are up-sets in s
        for a, b in zip(grid, grid[1:]):
            if _image_cmp(rho, a, b) > 0:
                good = False
                break
        for t in grid:
            gt = g.eval(t)
            i_left = _first_true(grid, lambda s: gt <= s)
            i_right = _first_true(grid, lambda s: rho.at_least(s, t))
            if i_left != i_right:
                good = False
                break
            # rho^T(rho(t)) <= t: least lattice s with rho(s) >= rho(t)
            eps = g.eps
            back = _bisect_min(lambda m: _image_cmp(rho, m * eps, t) >= 0, hint=int(t / eps)) * eps
            if back > t:
                good = False
                break
            # t <= rho(rho^T(t))
            if not rho.at_least(gt, t):
                good = False
                break
        detail[name] = good
        ok &= good
    return ScenarioResult("inverse_duality", ok, detail)


@_timed
def cgeodesic() -> ScenarioResult:
    rho = affine(1, 1)
    spaces = {"Z[-32,32]": z_window(-32, 32), "Z2[-6,6] Linf": box_window(2, -6, 6, "Linf")}
    detail = {}
    for name, s in spaces.items():
        detail[name] = cgeodesic_certificate(s, 1, rho, Fraction(1, 10)).verdict
    return ScenarioResult("cgeodesic", all(v == "pass" for v in detail.values()), detail)


@_timed
def surplus_weight() -> ScenarioResult:
    s = z_window(-32, 32)
    theta, rho = exp_base(2), affine(2, 0)
    hyp = all(theta.at_least(t, rho.eval(t) + 1) for t in range(3, 65))
    cert = surplus_weight_check(s, theta, rho, 3)
    inner = inner_window(s)
    a = build_weighted_rips(s, theta, 3).pairwise(inner, inner)
    b = build_weighted_rips(s, theta, INF).pairwise(inner, inner)
    same = bool(np.array_equal(a.finite, b.finite) and a.den == b.den and np.array_equal(a.num, b.num))
    return ScenarioResult("surplus_weight", hyp and cert.passed and same,
                          {"hypothesis": hyp, "certificate": cert.verdict, "exact_equal": same})


@_timed
def shortcut_negative(exponents=(11, 12)) -> ScenarioResult:
    theta = exp_base(2)
    slopes = []
    detail = {}
    ok = True
    for e in exponents:
        ray = path_graph(2**e)
        sc = shortcut_metric(ray, theta)
        cert = metric_preorder_check(sc, ray, anchors=[0])
        a, b = cert.constants["a"], cert.constants["b"]
        w = cert.witness or {}
        strict = cert.verdict == "fail" and "d_hi" in w and a * w["d_hi"] + b < w["d_lo"]
        detail[f"2^{e}"] = {"verdict": cert.verdict, "a": a, "b": b, "witness": w, "strict": bool(strict)}
        ok &= bool(strict)
        slopes.append(a)
    inc = all(x < y for x, y in zip(slopes, slopes[1:]))
    detail["slope_increases"] = inc
    return ScenarioResult("shortcut_negative", ok and inc, detail)


@_timed
def equalizer_shift(lo=-20, hi=20, shift=5, grid=range(11)) -> ScenarioResult:
    s = z_window(lo, hi)
    line = Lattice(1, "L1", name="Z")
    f = MapTable.from_function(s, line, lambda x: x, name="id")
    g = MapTable.from_function(s, line, lambda x: x + shift, name="shift")
    sizes = {k: len(kappa_equalizer(f, g, k).window) for k in grid}
    sizes_ok = all(n == (0 if k < shift else len(s.window)) for k, n in sizes.items())
    tab = equalizer_stability(f, g, list(grid))
    zero = all(tab.radius[(Fraction(shift), Fraction(kp))] == 0 for kp in grid if kp >= shift)
    return ScenarioResult("equalizer_shift", sizes_ok and zero,
                          {"sizes": sizes, "radius_zero": zero, "threshold": tab.threshold})


def random_diagram(rng: np.random.Generator) -> DiagramSpec:
    n_obj = int(rng.integers(1, 5))
    objects = {}
    for k in range(n_obj):
        size = int(rng.integers(1, 11))
        if rng.random() < 0.5:
            lo = int(rng.integers(-5, 5))
            objects[f"O{k}"] = z_window(lo, lo + size - 1)
        else:
            pts = list(range(size))
            # ultrametric-style explicit distances keep the triangle inequality
            lev = rng.integers(0, 3, size=size)
            mat = [[0 if i == j else int(1 + max(lev[i], lev[j]) + (i // 3 != j // 3)) for j in pts] for i in pts]
            objects[f"O{k}"] = ExplicitMatrix(pts, mat, name=f"O{k}")
    names = list(objects)
    arrows = []
    for k in range(int(rng.integers(0, 2 * n_obj + 1))):
        i, j = int(rng.integers(0, n_obj)), int(rng.integers(0, n_obj))
        src, dst = objects[names[i]], objects[names[j]]
        vals = {p: dst.window[int(rng.integers(0, len(dst.window)))] for p in src.window}
        arrows.append(Arrow(f"a{k}", names[i], names[j], MapTable(src, dst, vals, name=f"a{k}")))
    return DiagramSpec(objects, arrows)


@_timed
def tuple_oracle(count=24, seed=20240601, kappas=(0, 1, 2)) -> ScenarioResult:
    rng = np.random.default_rng(seed)
    mismatches = []
    for d in range(count):
        D = random_diagram(rng)
        sizes = [len(s.window) for s in D.objects.values()]
        for k in kappas:
            T = tuple_space(D, k, verify_limit=0)
            wins = [s.window for s in D.objects.values()]
            brute = {tuple(w[i] for w, i in zip(wins, t)) for t in brute_force_tuples(sizes, arrow_tables(D, k))}
            got = {T.coords(t) for t in T.window}
            if got != brute:
                mismatches.append({"diagram": d, "kappa": k})
    return ScenarioResult("tuple_oracle", not mismatches, {"diagrams": count, "mismatches": mismatches})


@_timed
def rips_tuple_z2(lo=-16, hi=16) -> ScenarioResult:
    F, T = lattice_family(2, lo, hi)
    cert = hhs_qi_certificate(F, T, 1, 0)
    c = cert.constants
    ok = (cert.passed and c["upper"] == affine(1, 0) and c["exact_agreement"]
          and c["covering_radius"] == 0)
    return ScenarioResult("rips_tuple_z2", bool(ok), {"certificate": cert.to_json()})


@_timed
def realization(lo=-16, hi=16, grid=(0, 1, 2)) -> ScenarioResult:
    F, T = lattice_family(2, lo, hi)
    prof = realization_profile(F, T, grid)
    ok = prof[Fraction(0)] == 0 and all(r is not INF and r <= k for k, r in prof.items())
    return ScenarioResult("realization", bool(ok), {"r_observed": prof})


@_timed
def retraction_constants(lo=-16, hi=16, sigma=1, kappa=0) -> ScenarioResult:
    F, F2, alpha, omega, T = nearest_even_retraction(2, lo, hi)
    rho = affine(1, 1)
    res = assemble_retraction(F, F2, alpha, omega, sigma, kappa, rho=rho, total=T)
    c = res.constants
    K, cc, r = c["K"], c["c"], c["r"]
    sigma, kappa = Fraction(sigma), Fraction(kappa)
    expect = {
        "K_prime": K + rho(cc) + r,
        "sigma_prime": max(rho(sigma) + 2 * r, K + rho(cc) + r),
        "kappa_prime": 2 * K + 2 * rho(cc) + rho(kappa) + 4 * r,
    }
    formulas = all(c[k] == v for k, v in expect.items())
    ok = formulas and res.certificate.passed and all(v == "pass" for v in c["checks"].values())
    return ScenarioResult("retraction_constants", bool(ok),
                          {"constants": {k: c[k] for k in ("K", "c", "r", "K_prime", "sigma_prime", "kappa_prime")},
                           "formulas_match": formulas, "checks": c["checks"]})


@_timed
def filtration_monotone(sigmas=(1, 2, 3, 5, 10)) -> ScenarioResult:
    detail = {}
    for name in BUILTIN_SPACES:
        s = builtin_space(name)
        d = s.window_matrix
        mats = {sg: build_rips(s, sg).window_matrix for sg in sigmas}
        good = True
        for i, sg in enumerate(sigmas):
            ds = mats[sg]
            # d <= sigma * d_sigma wherever d_sigma is finite; INF d_sigma bounds anything
            fin = ds.finite
            if (fin & ~d.finite).any() or (fin & (d.num * ds.den > sg * ds.num * d.den)).any():
                good = False
            for tau in sigmas[i + 1:]:
                dt = mats[tau]
                # d_tau <= d_sigma: INF d_sigma bounds anything, INF d_tau needs INF d_sigma
                if (ds.finite & ~dt.finite).any() or (ds.finite & (dt.num * ds.den > ds.num * dt.den)).any():
                    good = False
        detail[name] = good
    return ScenarioResult("filtration_monotone", all(detail.values()), detail)


# criterion number -> (scenario, runtime limit in seconds)
ACCEPTANCE = {
    1: (rips_closed_form, 1.0),
    2: (inverse_duality, 1.0),
    3: (cgeodesic, 5.0),
    4: (surplus_weight, 10.0),
    5: (shortcut_negative, 30.0),
    6: (equalizer_shift, 1.0),
    7: (tuple_oracle, 10.0),
    8: (rips_tuple_z2, 30.0),
    9: (realization, 10.0),
    10: (retraction_constants, 30.0),
    11: (filtration_monotone, 10.0),
}
