"""Pairwise-constrained factor families, their hatted tuple spaces, and retractions.

A family assigns a factor space to each label and a constraint set to each
unordered pair of labels. Constraints are stored intensionally (full, band,
diagonal, predicate) or extensionally (an explicit point set); either way
they are evaluated as a boolean table over the two factor windows.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .controls import Affine, ControlFn, affine, compose, fit_affine_upper_control
from .diagram import Arrow, DiagramSpec, TupleSpace, solve_constraints, tuple_space
from .errors import EmptyWindow, InputError, PreconditionReplayFailed
from .extdist import INF, ScaledMatrix, elementwise_max, encode_rational, to_fraction
from .metric_space import (
    Certificate,
    Lattice,
    MapTable,
    ProductLinf,
    Space,
    Subspace,
    _bound_violations,
    _first_index,
    _samples,
    _upper_pairs,
    binary_tree,
    box_window,
    certify_quasi_isometry,
    check_closeness,
    closeness_bound,
    check_upper_control,
    inner_window,
    normalize_point,
    z_window,
)
from .rips import build_rips

REALIZATION_FLAG = 10**5
SECTION_SAMPLES = 1000


@dataclass
class Constraint:
    """``R_UV`` as one of: full, points, band, diagonal, predicate."""

    kind: str = "full"
    points: frozenset | None = None
    band: Fraction | None = None
    predicate: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("full", "points", "band", "diagonal", "predicate"):
            raise InputError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "points":
            self.points = frozenset(tuple(normalize_point(q) for q in p) for p in (self.points or ()))
        if self.kind == "band":
            self.band = to_fraction(self.band)
        if self.kind == "predicate" and self.predicate is None:
            raise InputError("predicate constraint needs a callable")

    def transposed(self) -> "Constraint":
        if self.kind == "points":
            return Constraint("points", points=frozenset((b, a) for a, b in self.points))
        if self.kind == "predicate":
            pred = self.predicate
            return Constraint("predicate", predicate=lambda a, b: pred(b, a))
        return self

    def table(self, cu: Space, cv: Space) -> np.ndarray:
        """Membership of ``(a, b)`` in ``R_UV`` over ``window(C_U) x window(C_V)``."""
        wu, wv = cu.window, cv.window
        if self.kind == "full":
            return np.ones((len(wu), len(wv)), dtype=bool)
        if self.kind == "points":
            out = np.zeros((len(wu), len(wv)), dtype=bool)
            for a, b in self.points:
                if a in cu.index and b in cv.index:
                    out[cu.index[a], cv.index[b]] = True
            return out
        if self.kind == "diagonal":
            return np.array([[a == b for b in wv] for a in wu], dtype=bool).reshape(len(wu), len(wv))
        if self.kind == "band":
            return np.array([[_coord_gap(a, b) <= self.band for b in wv] for a in wu], dtype=bool).reshape(len(wu), len(wv))
        return np.array([[bool(self.predicate(a, b)) for b in wv] for a in wu], dtype=bool).reshape(len(wu), len(wv))

    def to_json(self):
        if self.kind == "full":
            return "full"
        if self.kind == "points":
            from .metric_space import encode_point

            return {"points": sorted([encode_point(a), encode_point(b)] for a, b in self.points)}
        if self.kind == "band":
            return {"band": encode_rational(self.band)}
        if self.kind == "diagonal":
            return {"diagonal": True}
        return {"predicate": getattr(self.predicate, "__name__", "predicate")}


def _coord_gap(a, b) -> Fraction:
    """``|a - b|`` for integer points, ``max_k |a_k - b_k|`` for tuples."""
    if isinstance(a, tuple):
        return Fraction(max(abs(x - y) for x, y in zip(a, b)))
    return Fraction(abs(a - b))


def constraint_from_json(obj) -> Constraint:
    if obj == "full" or obj is None:
        return Constraint("full")
    if isinstance(obj, dict):
        if "points" in obj:
            return Constraint("points", points=frozenset(tuple(normalize_point(q) for q in p) for p in obj["points"]))
        if "band" in obj:
            return Constraint("band", band=to_fraction(obj["band"]))
        if obj.get("diagonal"):
            return Constraint("diagonal")
    raise InputError(f"cannot read constraint {obj!r}")


class PairwiseFamily:
    """Factor spaces ``C_U`` and one constraint set per unordered pair of labels."""

    def __init__(self, factors: dict, constraints: dict | None = None, name: str = "family"):
        if not factors:
            raise InputError("a family needs at least one factor")
        self.factors = dict(factors)
        self.labels = list(self.factors)
        self.name = name
        self._constraints: dict = {}
        for key, c in (constraints or {}).items():
            u, v = _pair_key(key)
            if u not in self.factors or v not in self.factors or u == v:
                raise InputError(f"constraint on unknown or repeated labels {key!r}")
            if not isinstance(c, Constraint):
                c = constraint_from_json(c)
            if self.labels.index(u) > self.labels.index(v):
                u, v, c = v, u, c.transposed()
            if (u, v) in self._constraints:
                raise InputError(f"constraint for {{{u},{v}}} given twice")
            self._constraints[(u, v)] = c

    def pairs(self) -> list:
        return list(itertools.combinations(self.labels, 2))

    def constraint(self, u, v) -> Constraint:
        if self.labels.index(u) > self.labels.index(v):
            return self.constraint(v, u).transposed()
        return self._constraints.get((u, v), Constraint("full"))

    def relation(self, u, v) -> np.ndarray:
        return self.constraint(u, v).table(self.factors[u], self.factors[v])

    def relaxed(self, u, v, kappa) -> np.ndarray:
        """Closed ``kappa``-neighbourhood of ``R_UV`` in the l-infinity pair product."""
        base = self.relation(u, v)
        kappa = to_fraction(kappa)
        if kappa == 0 or base.all():
            return base
        nu = _ball_table(self.factors[u], kappa)
        nv = _ball_table(self.factors[v], kappa)
        # (a, b) is close to some (a', b') in R iff nu[a, a'] and base[a', b'] and nv[b', b]
        return (nu.astype(np.int64) @ base.astype(np.int64) @ nv.T.astype(np.int64)) > 0

    def constrained_pairs(self) -> list:
        return [p for p in self.pairs() if self.constraint(*p).kind != "full"]

    def pair_points(self, u, v, kappa=0) -> list:
        """Points of the (relaxed) constraint set in the pair product's window order."""
        rel = self.relaxed(u, v, kappa)
        wu, wv = self.factors[u].window, self.factors[v].window
        return [(wu[i], wv[j]) for i, j in zip(*np.nonzero(rel))]

    def pair_space(self, u, v, kappa=0) -> Subspace:
        prod = ProductLinf([self.factors[u], self.factors[v]], window=[], name=f"{u}x{v}")
        pts = self.pair_points(u, v, kappa)
        return Subspace(prod, points=pts, window=pts, name=f"R[{u},{v}]")

    def to_json(self):
        return {
            "factors": {u: s.to_json() for u, s in self.factors.items()},
            "constraints": {f"{u},{v}": c.to_json() for (u, v), c in self._constraints.items()},
        }


def _pair_key(key):
    if isinstance(key, str):
        parts = [p.strip() for p in key.split(",")]
    else:
        parts = list(key)
    if len(parts) != 2:
        raise InputError(f"constraint key {key!r} must name two labels")
    return parts[0], parts[1]


def _ball_table(space: Space, kappa) -> np.ndarray:
    m = space.window_matrix
    return m.finite & (m.num <= math.floor(to_fraction(kappa) * m.den))


# -- encoding as a diagram -------------------------------------------------------

def secondary_name(u, v) -> str:
    return f"{u},{v}"


def encode_pairwise_diagram(F: PairwiseFamily, kappa=0, check_sample: int = 200, seed: int = 0) -> DiagramSpec:
    """Primary vertex per label, secondary vertex per pair with projections onto both factors."""
    objects = dict(F.factors)
    arrows = []
    rng = np.random.default_rng(seed)
    for u, v in F.pairs():
        R = F.pair_space(u, v, kappa)
        name = secondary_name(u, v)
        objects[name] = R
        for k, target in enumerate((u, v)):
            proj = MapTable(R, F.factors[target], {p: p[k] for p in R.window}, name=f"pi[{name}->{target}]")
            if len(R.window) > check_sample:
                pick = sorted(rng.choice(len(R.window), size=check_sample, replace=False).tolist())
                sample = proj.restrict([R.window[i] for i in pick])
            else:
                sample = proj
            c = check_upper_control(sample, affine(1, 0))
            if not c.passed:
                raise AssertionError(f"projection {proj.name} is not 1-Lipschitz: {c.witness}")
            arrows.append(Arrow(f"{name}->{target}", name, target, proj))
    return DiagramSpec(objects, arrows, affine(1, 0))


# -- hatted tuple space -------------------------------------------------------------

def hatted_tuple_space(F: PairwiseFamily, kappa=0, samples: int = SECTION_SAMPLES, seed: int = 0,
                       cross_check_limit: int = 10**4) -> TupleSpace:
    """Tuples over the primary factors whose pairs lie in the ``kappa``-relaxed constraints."""
    kappa = to_fraction(kappa)
    labels = F.labels
    cons = []
    for u, v in F.constrained_pairs():
        cons.append((labels.index(u), labels.index(v), F.relaxed(u, v, kappa)))
    sizes = [len(F.factors[u].window) for u in labels]
    idx = solve_constraints(sizes, cons)
    wins = [F.factors[u].window for u in labels]
    tuples = [tuple(w[k] for w, k in zip(wins, t)) for t in idx]
    T = TupleSpace([F.factors[u] for u in labels], tuples, kappa, None, None, name=f"hatTuple[{kappa}]")
    T.family = F
    T.section_check = section_isometry_check(F, T, samples, seed)
    if not T.section_check.passed:
        raise AssertionError(f"section is not isometric: {T.section_check.witness}")
    if kappa == 0 and len(tuples) <= cross_check_limit and F.pairs():
        full = tuple_space(encode_pairwise_diagram(F), 0)
        proj = sorted(set(normalize_point(full.coords(t)[: len(labels)]) for t in full.window), key=repr)
        if proj != sorted(T.window, key=repr):
            raise AssertionError("hatted tuples disagree with the projected full tuple space")
        T.verified = True
    return T


def section(F: PairwiseFamily, t) -> tuple:
    """``x -> (x_U)_U x ((x_U, x_V))_UV``."""
    x = t if len(F.labels) > 1 else (t,)
    pos = {u: k for k, u in enumerate(F.labels)}
    return tuple(x) + tuple((x[pos[u]], x[pos[v]]) for u, v in F.pairs())


def section_isometry_check(F: PairwiseFamily, T: TupleSpace, samples: int = SECTION_SAMPLES, seed: int = 0) -> Certificate:
    """Replay ``d(s x, s y) = d(x, y)`` on sampled tuple pairs."""
    n = len(T.window)
    consts = {"pairs": 0}
    if n == 0:
        return Certificate("section_isometry", "pass", consts)
    rng = np.random.default_rng(seed)
    ii = rng.integers(0, n, size=samples)
    jj = rng.integers(0, n, size=samples)
    A = [T.window[i] for i in ii]
    B = [T.window[j] for j in jj]
    d = T.paired(A, B)
    full_factors = [F.factors[u] for u in F.labels] + [
        ProductLinf([F.factors[u], F.factors[v]], window=[]) for u, v in F.pairs()]
    full = ProductLinf(full_factors, window=[], name="full")
    ds = full.paired([section(F, a) for a in A], [section(F, b) for b in B])
    consts["pairs"] = samples
    bad = (ds.finite != d.finite) | (ds.finite & (ds.num * d.den != d.num * ds.den))
    if bad.any():
        k = int(np.flatnonzero(bad[0])[0])
        return Certificate("section_isometry", "fail", consts,
                           witness={"pair": [A[k], B[k]], "d_tuple": d.entry(0, k), "d_section": ds.entry(0, k)})
    return Certificate("section_isometry", "pass", consts)


# -- total space candidates ----------------------------------------------------------

class TotalSpaceCandidate:
    """A space ``X`` with projections ``lambda_U`` landing in every constraint set."""

    def __init__(self, space: Space, projections: dict, family: PairwiseFamily, control: ControlFn | None = None):
        self.space = space
        self.projections = dict(projections)
        self.family = family
        missing = [u for u in family.labels if u not in self.projections]
        if missing:
            raise InputError(f"no projection for label {missing[0]!r}")
        for u, lam in self.projections.items():
            if tuple(lam.domain) != tuple(space.window):
                raise InputError(f"projection {u} must be defined on the window of X")
        for u, v in family.constrained_pairs():
            rel = family.relation(u, v)
            cu, cv = family.factors[u], family.factors[v]
            for p in space.window:
                a, b = self.projections[u](p), self.projections[v](p)
                if not rel[cu.index[a], cv.index[b]]:
                    raise InputError(f"projections of {p!r} leave the constraint set of {{{u},{v}}}")
        self.control = control
        self.control_check = self._certify_control(control)

    def _certify_control(self, control):
        if control is None:
            best: dict = {}
            for lam in self.projections.values():
                x = self.space.window_matrix
                img = lam.image()
                y = lam.dst.pairwise(img, img)
                for t, s in _samples(x, y, _upper_pairs(len(img)) | np.eye(len(img), dtype=bool)).items():
                    if s > best.get(t, -1):
                        best[t] = s
            control = fit_affine_upper_control(best.items()) if best else affine(0, 0)
            self.control = control
        for u, lam in self.projections.items():
            c = check_upper_control(lam, control)
            if not c.passed:
                raise InputError(f"projection {u} violates the common control {control}: {c.witness}")
        return Certificate("common_control", "pass", {"control": control})

    def product_map(self, dst: Space) -> MapTable:
        labels = self.family.labels
        return MapTable(self.space, dst,
                        {p: normalize_point(tuple(self.projections[u](p) for u in labels)) for p in self.space.window},
                        name="prod_lambda")

    def coordinate_tables(self, tuples: Sequence, coords) -> list:
        """Per label, ``d_U(x_U, lambda_U p)`` for tuples ``x`` against every window point ``p``."""
        out = []
        for k, u in enumerate(self.family.labels):
            fac = self.family.factors[u]
            xs = [coords(t)[k] for t in tuples]
            out.append(fac.pairwise(xs, self.projections[u].image()))
        return out


def realization_check(F: PairwiseFamily, T: TotalSpaceCandidate, kappa) -> dict:
    """Worst case over hatted tuples of ``min_p max_U d(lambda_U p, x_U)``."""
    if not T.space.window:
        raise EmptyWindow("the total space window is empty")
    Y = hatted_tuple_space(F, kappa)
    notes = {}
    if len(T.space.window) > REALIZATION_FLAG:
        notes["flag"] = f"brute-force search over {len(T.space.window)} points"
    consts = {"kappa": Y.kappa, "tuples": len(Y.window)}
    if not Y.window:
        return {"r_observed": Fraction(0), "certificate": Certificate("realization", "pass", dict(consts, r_observed=Fraction(0)), notes=notes)}
    m = elementwise_max(T.coordinate_tables(list(Y.window), Y.coords))
    v, row, col, unbounded = kernels.directed_hausdorff(m.num, m.finite)
    if unbounded:
        consts["r_observed"] = INF
        cert = Certificate("realization", "fail", consts,
                           witness={"tuple": Y.window[row], "reason": "no window point at finite distance"}, notes=notes)
        return {"r_observed": INF, "certificate": cert}
    r = Fraction(v, m.den)
    consts["r_observed"] = r
    consts["worst_tuple"] = Y.window[row]
    consts["realizer"] = T.space.window[col]
    return {"r_observed": r, "certificate": Certificate("realization", "pass", consts, notes=notes)}


def realization_profile(F: PairwiseFamily, T: TotalSpaceCandidate, kappa_grid: Sequence) -> dict:
    """Empirical ``r(kappa)`` over a grid, window-certified only."""
    grid = sorted(dict.fromkeys(to_fraction(k) for k in kappa_grid))
    return {k: realization_check(F, T, k)["r_observed"] for k in grid}


def _fibre_profile(T: TotalSpaceCandidate, pts: list):
    labels = T.family.labels
    prod = ProductLinf([T.family.factors[u] for u in labels], window=[])
    imgs = [normalize_point(tuple(T.projections[u](p) for u in labels)) for p in pts]
    x = T.space.pairwise(pts, pts)
    y = prod.pairwise(imgs, imgs)
    mask = _upper_pairs(len(pts)) | np.eye(len(pts), dtype=bool)
    return x, y, mask, _samples(y, x, mask)


def uniqueness_criterion_check(T: TotalSpaceCandidate, margin=Fraction(1, 10)) -> Certificate:
    """Window evidence that ``prod lambda_U`` admits a lower control.

    ``theta(R)`` is the largest ``d_X`` over inner pairs whose images are
    within ``R``. The fitted bound is ``d_X <= a R + theta(0)`` with the least
    such ``a``. The check fails when the fibre diameter ``theta(0)`` grows
    between the half-radius inner window and the inner window, since then
    no window-independent bound can hold.
    """
    inner = inner_window(T.space, margin)
    x, y, mask, best = _fibre_profile(T, inner)
    if (mask & (x.finite != y.finite)).any():
        i, j = _first_index(mask & (x.finite != y.finite))
        return Certificate("uniqueness_criterion", "fail", {"inner_points": len(inner)},
                           witness={"pair": [inner[i], inner[j]], "reason": "finiteness mismatch"})
    fibre = best.get(Fraction(0), Fraction(0))
    slope = max([(v - fibre) / t for t, v in best.items() if t > 0] + [Fraction(0)])
    rho = Affine(slope, fibre)
    half = inner_window(T.space, 1 - (1 - to_fraction(margin)) / 2)
    _, _, _, best_half = _fibre_profile(T, half)
    fibre_half = best_half.get(Fraction(0), Fraction(0))
    consts = {"rho": rho, "fibre_diameter": fibre, "fibre_diameter_half": fibre_half,
              "inner_points": len(inner), "theta": dict(sorted(best.items())[:8])}
    if fibre > fibre_half:
        m = mask & y.finite & (y.num == 0) & x.finite
        xm = np.where(m, x.num, -1)
        i, j = np.unravel_index(int(np.argmax(xm)), xm.shape)
        return Certificate("uniqueness_criterion", "fail", consts,
                           witness={"pair": [inner[i], inner[j]], "d_X": x.entry(i, j), "d_product": y.entry(i, j),
                                    "reason": "fibre diameter grows with the window"})
    bad, worst, _ = _bound_violations(y, x, mask, rho.eval, upper=True)
    if worst is not None:
        raise AssertionError("fitted fibre bound fails its own replay")
    return Certificate("uniqueness_criterion", "pass", consts)


def hhs_qi_certificate(F: PairwiseFamily, T: TotalSpaceCandidate, sigma, kappa=0, margin=Fraction(1, 10)) -> Certificate:
    """Quasi-isometry data for ``X -> Rips_sigma`` of the hatted tuple space via ``prod lambda_U``."""
    Y = hatted_tuple_space(F, kappa)
    g = build_rips(Y, sigma)
    f = T.product_map(g)
    cert = certify_quasi_isometry(f, margin)
    inner = inner_window(T.space, margin)
    x = T.space.pairwise(inner, inner)
    img = f.image(inner)
    y = g.pairwise(img, img)
    exact = bool(((x.finite == y.finite) & (~x.finite | (x.num * y.den == y.num * x.den))).all())
    cert.constants.update({"sigma": to_fraction(sigma), "kappa": Y.kappa, "tuples": len(Y.window),
                           "exact_agreement": exact})
    return cert


# -- pairwise compatibility and retractions -----------------------------------------

def _snap_tables(F2: PairwiseFamily, u, v, a_pts: Sequence, b_pts: Sequence):
    """Nearest point of ``R'_UV`` to each ``(a, b)``; ties go to the first in window order."""
    R = F2.pair_points(u, v)
    if not R:
        raise PreconditionReplayFailed(f"constraint set {{{u},{v}}} is empty", location={"pair": [u, v]})
    cu, cv = F2.factors[u], F2.factors[v]
    du = cu.pairwise(list(a_pts), [p[0] for p in R])
    dv = cv.pairwise(list(b_pts), [p[1] for p in R])
    m = elementwise_max([du, dv])
    big = np.iinfo(np.int64).max
    masked = np.where(m.finite, m.num, big)
    col = np.argmin(masked, axis=1)
    dist = masked[np.arange(len(a_pts)), col]
    return R, col, dist, m.den


def compatible_family_check(F: PairwiseFamily, F2: PairwiseFamily, alpha: dict, r) -> Certificate:
    """``(alpha_U x alpha_V)(R_UV)`` within ``r`` of ``R'_UV`` on every pair; reports the exact worst gap."""
    r = INF if r is INF else to_fraction(r)
    worst = Fraction(0)
    where = None
    for u, v in F.pairs():
        pts = F.pair_points(u, v)
        if not pts:
            continue
        a = [alpha[u](p[0]) for p in pts]
        b = [alpha[v](p[1]) for p in pts]
        if F2.constraint(u, v).kind == "full":
            continue  # images stay in the target windows, which is R' itself
        _, _, dist, den = _snap_tables(F2, u, v, a, b)
        if (dist == np.iinfo(np.int64).max).any():
            k = int(np.flatnonzero(dist == np.iinfo(np.int64).max)[0])
            return Certificate("compatible_family", "fail", {"deviation": INF, "r": r},
                               witness={"pair": [u, v], "point": pts[k], "deviation": INF})
        k = int(np.argmax(dist))
        gap = Fraction(int(dist[k]), den)
        if gap > worst:
            worst, where = gap, {"pair": [u, v], "point": pts[k], "image": (a[k], b[k]), "deviation": gap}
    consts = {"deviation": worst, "r": r}
    if worst > r:
        return Certificate("compatible_family", "fail", consts, witness=where)
    return Certificate("compatible_family", "pass", consts)


def secondary_map(F: PairwiseFamily, F2: PairwiseFamily, alpha: dict, u, v) -> MapTable:
    """``alpha_UV``: snap ``(alpha_U a, alpha_V b)`` to the nearest point of ``R'_UV``."""
    src = F.pair_space(u, v)
    dst = F2.pair_space(u, v)
    pts = list(src.window)
    a = [alpha[u](p[0]) for p in pts]
    b = [alpha[v](p[1]) for p in pts]
    R, col, _, _ = _snap_tables(F2, u, v, a, b)
    return MapTable(src, dst, {p: R[c] for p, c in zip(pts, col)}, name=f"alpha[{u},{v}]")


def _shift(rho: ControlFn, s: Fraction) -> ControlFn:
    if s == 0:
        return rho
    if isinstance(rho, Affine):
        return Affine(rho.a, rho.b + s)
    return compose(affine(1, s), rho)


@dataclass
class RetractionResult:
    constants: dict
    induced: MapTable | None
    certificate: Certificate
    secondary: dict = field(default_factory=dict)

    def to_json(self):
        return {"constants": Certificate("c", "pass", self.constants).to_json()["constants"],
                "certificate": self.certificate.to_json()}


def assemble_retraction(F: PairwiseFamily, F2: PairwiseFamily, alpha: dict, omega: dict, sigma, kappa=0,
                        rho: ControlFn | None = None, r=None, c=None, K=None, total: TotalSpaceCandidate | None = None) -> RetractionResult:
    """Retraction between hatted tuple spaces from a pairwise compatible family.

    Certified inputs: ``r`` and ``c`` (compatibility of alpha and omega),
    ``K`` (``alpha_U omega_U`` close to the identity) and a common upper
    control ``rho`` of alpha. Emits ``rho' = rho + 2r``,
    ``K' = K + rho(c) + r``, ``sigma' = max(rho(sigma) + 2r, K')`` and
    ``kappa' = 2K + 2 rho(c) + rho(kappa) + 4r``, then replays each conclusion.
    """
    sigma, kappa = to_fraction(sigma), to_fraction(kappa)
    if F.labels != F2.labels:
        raise InputError("both families need the same labels in the same order")
    labels = F.labels
    for u in labels:
        for fam, maps, nm, src, dst in ((F, alpha, "alpha", F.factors[u], F2.factors[u]),
                                        (F2, omega, "omega", F2.factors[u], F.factors[u])):
            if u not in maps:
                raise PreconditionReplayFailed(f"{nm} has no component for {u}", location={"label": u, "map": nm})
            if tuple(maps[u].domain) != tuple(src.window):
                raise PreconditionReplayFailed(f"{nm}_{u} must be defined on the window of its source",
                                               location={"label": u, "map": nm})

    # certified inputs, measured or replayed
    ra = compatible_family_check(F, F2, alpha, r if r is not None else INF)
    rc = compatible_family_check(F2, F, omega, c if c is not None else INF)
    for cert, nm in ((ra, "alpha"), (rc, "omega")):
        if not cert.passed:
            raise PreconditionReplayFailed(f"{nm} is not compatible with the stated constant",
                                           location=dict(cert.witness or {}, map=nm))
    r = ra.constants["deviation"] if r is None else to_fraction(r)
    c = rc.constants["deviation"] if c is None else to_fraction(c)
    k_meas = Fraction(0)
    for u in labels:
        comp = MapTable(F2.factors[u], F2.factors[u], {p: alpha[u](omega[u](p)) for p in F2.factors[u].window})
        gap = closeness_bound(comp, MapTable.identity(F2.factors[u]))
        if gap is INF or (K is not None and gap > to_fraction(K)):
            cl = check_closeness(comp, MapTable.identity(F2.factors[u]), K if K is not None else 0)
            raise PreconditionReplayFailed(f"alpha∘omega is not K-close to the identity on {u}",
                                           location=dict(cl.witness, label=u))
        k_meas = max(k_meas, gap)
    K = k_meas if K is None else to_fraction(K)
    if rho is None:
        best: dict = {}
        for u in labels:
            x = F.factors[u].window_matrix
            img = alpha[u].image()
            y = F2.factors[u].pairwise(img, img)
            for t, s in _samples(x, y, _upper_pairs(len(img)) | np.eye(len(img), dtype=bool)).items():
                best[t] = max(best.get(t, s), s)
        rho = fit_affine_upper_control(best.items())
    for u in labels:
        uc = check_upper_control(alpha[u], rho)
        if not uc.passed:
            raise PreconditionReplayFailed(f"alpha_{u} violates {rho}", location=dict(uc.witness, label=u))

    rho2 = _shift(rho, 2 * r)
    K2 = K + rho.eval(c) + r
    sigma2 = max(rho.eval(sigma) + 2 * r, K2)
    kappa2 = 2 * K + 2 * rho.eval(c) + rho.eval(kappa) + 4 * r
    consts = {"K": K, "c": c, "r": r, "rho": rho, "sigma": sigma, "kappa": kappa,
              "rho_prime": rho2, "K_prime": K2, "sigma_prime": sigma2, "kappa_prime": kappa2}
    checks = {}

    # secondary components and their controls
    sec_a = {(u, v): secondary_map(F, F2, alpha, u, v) for u, v in F.pairs()}
    sec_w = {(u, v): secondary_map(F2, F, omega, u, v) for u, v in F.pairs()}
    fails = []
    for key, m in sec_a.items():
        uc = check_upper_control(m, rho2)
        checks[f"upper[{key[0]},{key[1]}]"] = uc.verdict
        if not uc.passed:
            fails.append(dict(uc.witness, check="secondary upper control", pair=list(key)))
        # naturality with the projections: pi_U alpha_UV within r of alpha_U pi_U
        for k, lab in enumerate(key):
            fac = F2.factors[lab]
            lhs = [q[k] for q in m.image()]
            rhs = [alpha[lab](p[k]) for p in m.domain]
            d = fac.paired(lhs, rhs)
            if (~d.finite).any() or (d.num > math.floor(r * d.den)).any():
                j = int(np.flatnonzero(~d.finite[0] | (d.num[0] > math.floor(r * d.den)))[0])
                fails.append({"check": "projection naturality", "pair": list(key), "point": m.domain[j]})
    # retraction identity within K' on every target coordinate
    worst_back = Fraction(0)
    for u in labels:
        fac = F2.factors[u]
        d = fac.paired([alpha[u](omega[u](p)) for p in fac.window], list(fac.window))
        worst_back = max(worst_back, Fraction(int(d.num.max(initial=0)), d.den))
    for key in F.pairs():
        back = sec_a[key].compose(sec_w[key])
        d = back.dst.paired(back.image(), list(back.domain))
        if d.num.size:
            if not d.finite.all():
                worst_back = INF
                break
            worst_back = max(worst_back, Fraction(int(d.num.max()), d.den))
    consts["retraction_distance"] = worst_back
    checks["retraction_identity"] = "pass" if worst_back <= K2 else "fail"
    if worst_back > K2:
        fails.append({"check": "retraction identity", "distance": worst_back})

    # induced map between hatted tuple spaces and its edge behaviour
    Y = hatted_tuple_space(F, kappa)
    Y2 = hatted_tuple_space(F2, kappa2)
    vals = {t: normalize_point(tuple(alpha[u](Y.coords(t)[k]) for k, u in enumerate(labels))) for t in Y.window}
    outside = [t for t, v in vals.items() if v not in Y2.index]
    induced = None
    if outside:
        fails.append({"check": "image in target tuples", "point": outside[0]})
        checks["image_in_target"] = "fail"
    else:
        checks["image_in_target"] = "pass"
        induced = MapTable(Y, Y2, vals, name="alpha_hat")
        g = build_rips(Y, sigma)
        img = [vals[t] for t in Y.window]
        d = Y2.pairwise(img, img)
        bad = g.adjacency & (~d.finite | (d.num > math.floor(sigma2 * d.den)))
        checks["edge_lipschitz"] = "fail" if bad.any() else "pass"
        if bad.any():
            i, j = _first_index(bad)
            fails.append({"check": "edge lipschitz", "pair": [Y.window[i], Y.window[j]], "image_distance": d.entry(i, j)})
        # the induced map's upper control: rho' on tuple distances
        uc = check_upper_control(induced, rho2)
        checks["induced_upper"] = uc.verdict
        if not uc.passed:
            fails.append(dict(uc.witness, check="induced upper control"))
        # tuple-level retraction identity on the target
        back = [normalize_point(tuple(alpha[u](omega[u](Y2.coords(t)[k])) for k, u in enumerate(labels))) for t in Y2.window]
        db = ProductLinf(Y2.factors, window=[]).paired(back, list(Y2.window))
        mx = Fraction(int(db.num.max(initial=0)), db.den) if db.num.size else Fraction(0)
        checks["tuple_retraction"] = "pass" if mx <= K2 else "fail"
        if mx > K2:
            fails.append({"check": "tuple retraction identity", "distance": mx})
    if total is not None:
        consts["total_points"] = len(total.space.window)
    consts["checks"] = checks
    consts["tuples"] = len(Y.window)
    consts["target_tuples"] = len(Y2.window)
    cert = (Certificate("retraction", "pass", consts) if not fails
            else Certificate("retraction", "fail", consts, witness=fails[0]))
    return RetractionResult(consts, induced, cert, {"alpha": sec_a, "omega": sec_w})


# -- built-in toy families ------------------------------------------------------------

def lattice_family(n: int = 2, lo: int = -16, hi: int = 16, norm: str = "Linf"):
    """``n`` copies of a Z window, full constraints, ``X`` the box with axis projections."""
    labels = [f"U{k + 1}" for k in range(n)]
    factors = {u: z_window(lo, hi) for u in labels}
    F = PairwiseFamily(factors, {}, name=f"lattice{n}")
    X = box_window(n, lo, hi, norm=norm)
    proj = {u: MapTable(X, factors[u], {p: (p[k] if n > 1 else p) for p in X.window}, name=f"lambda_{u}")
            for k, u in enumerate(labels)}
    return F, TotalSpaceCandidate(X, proj, F)


def even_lattice_family(n: int = 2, lo: int = -16, hi: int = 16):
    """``n`` copies of ``2Z`` inside a Z window, full constraints."""
    labels = [f"U{k + 1}" for k in range(n)]
    base = z_window(lo, hi)
    evens = [x for x in base.window if x % 2 == 0]
    factors = {u: Subspace(base, points=evens, window=evens, name="2Z") for u in labels}
    return PairwiseFamily(factors, {}, name=f"even_lattice{n}")


def nearest_even_retraction(n: int = 2, lo: int = -16, hi: int = 16):
    """``x -> 2 floor(x / 2)`` per factor with the inclusion as right inverse."""
    F, T = lattice_family(n, lo, hi)
    F2 = even_lattice_family(n, lo, hi)
    alpha = {u: MapTable.from_function(F.factors[u], F2.factors[u], lambda x: 2 * (x // 2), name=f"alpha_{u}")
             for u in F.labels}
    omega = {u: MapTable.from_function(F2.factors[u], F.factors[u], lambda x: x, name=f"omega_{u}")
             for u in F.labels}
    return F, F2, alpha, omega, T


def diagonal_family(lo: int = -8, hi: int = 8):
    """Two Z factors constrained to the diagonal; ``X = Z`` with identity projections."""
    factors = {"U": z_window(lo, hi), "V": z_window(lo, hi)}
    F = PairwiseFamily(factors, {("U", "V"): Constraint("diagonal")}, name="diagonal")
    X = z_window(lo, hi)
    proj = {u: MapTable.identity(X, factors[u], name=f"lambda_{u}") for u in factors}
    return F, TotalSpaceCandidate(X, proj, F)


def band_family(lo: int = -8, hi: int = 8, B: int = 2):
    """Two Z factors with ``|x_U - x_V| <= B``; ``X`` is the band in the l-infinity plane."""
    factors = {"U": z_window(lo, hi), "V": z_window(lo, hi)}
    F = PairwiseFamily(factors, {("U", "V"): Constraint("band", band=B)}, name=f"band{B}")
    plane = Lattice(2, "Linf")
    pts = [(a, b) for a in range(lo, hi + 1) for b in range(lo, hi + 1) if abs(a - b) <= B]
    X = Subspace(plane, points=pts, window=pts, name=f"band{B}")
    proj = {u: MapTable(X, factors[u], {p: p[k] for p in X.window}, name=f"lambda_{u}")
            for k, u in enumerate(("U", "V"))}
    return F, TotalSpaceCandidate(X, proj, F)


def tree_tree_family(depth: int = 3):
    """Two binary trees, full constraints; ``X`` their l-infinity product."""
    t1, t2 = binary_tree(depth, name="tree1"), binary_tree(depth, name="tree2")
    factors = {"U": t1, "V": t2}
    F = PairwiseFamily(factors, {}, name=f"tree{depth}xtree{depth}")
    X = ProductLinf([t1, t2], name="treextree")
    proj = {u: MapTable(X, factors[u], {p: p[k] for p in X.window}, name=f"lambda_{u}")
            for k, u in enumerate(("U", "V"))}
    return F, TotalSpaceCandidate(X, proj, F)


BUILTIN_FAMILIES = {
    "lattice": lattice_family,
    "diagonal": diagonal_family,
    "band": band_family,
    "tree_tree": tree_tree_family,
}
