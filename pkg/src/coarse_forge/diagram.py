"""Uniformly controlled diagrams, cones, and consistent-tuple spaces.

Tuple spaces are enumerated as a binary constraint problem: every arrow
``phi: i -> j`` contributes a boolean table ``allowed[a, b]`` meaning
``d_j(b, beta_phi(a)) <= kappa`` over the object windows. Domains are pruned
by arc consistency, then searched by backtracking in object order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .controls import Affine, ControlFn, affine, fit_affine_upper_control
from .equalizer import StabilityTable, stability_table
from .errors import (
    EmptyTupleSpace,
    InputError,
    KappaTooSmall,
    Overflow,
    PreconditionReplayFailed,
    ProductTooLarge,
)
from .extdist import INF, encode_rational, to_fraction
from .metric_space import (
    Certificate,
    ExplicitMatrix,
    MapTable,
    ProductLinf,
    Space,
    _first_index,
    _samples,
    _upper_pairs,
    check_closeness,
    check_upper_control,
    normalize_point,
)
from .rips import RipsGraph, build_rips

PRODUCT_LIMIT = 10**6
BRUTE_FORCE_LIMIT = 10**4
SEARCH_BUDGET = 10**7


@dataclass
class Arrow:
    id: str
    src: str
    dst: str
    map: MapTable


@dataclass
class DiagramSpec:
    objects: dict  # name -> Space, declaration order kept
    arrows: list
    uniform_control: ControlFn | None = None

    def __post_init__(self):
        if not self.objects:
            raise InputError("a diagram needs at least one object")
        seen = set()
        for a in self.arrows:
            if a.src not in self.objects or a.dst not in self.objects:
                raise InputError(f"arrow {a.id} joins unknown objects {a.src!r} -> {a.dst!r}")
            if a.id in seen:
                raise InputError(f"duplicate arrow id {a.id!r}")
            seen.add(a.id)
            if tuple(a.map.domain) != tuple(self.objects[a.src].window):
                raise InputError(f"arrow {a.id}: bonding map must be defined on the window of {a.src}")

    @property
    def names(self) -> list:
        return list(self.objects)

    def position(self, name) -> int:
        return self.names.index(name)

    def product_size(self) -> int:
        n = 1
        for s in self.objects.values():
            n *= len(s.window)
        return n

    def product_space(self, window) -> ProductLinf:
        return ProductLinf(list(self.objects.values()), window=window, name="prod(" + ",".join(self.names) + ")")


# -- uniform control ------------------------------------------------------------

def validate_uc_diagram(D: DiagramSpec, control: ControlFn | None = None) -> Certificate:
    """Check the declared common upper control on every bonding map, or fit one."""
    rho = control if control is not None else D.uniform_control
    if rho is None:
        best: dict = {}
        for a in D.arrows:
            dom = list(a.map.domain)
            x = a.map.src.pairwise(dom, dom)
            img = a.map.image()
            y = a.map.dst.pairwise(img, img)
            for t, v in _samples(x, y, _upper_pairs(len(dom)) | np.eye(len(dom), dtype=bool)).items():
                if v > best.get(t, -1):
                    best[t] = v
        fit = fit_affine_upper_control(best.items()) if best else affine(0, 0)
        for a in D.arrows:
            c = check_upper_control(a.map, fit)
            if not c.passed:
                return Certificate("uc_diagram", "fail", {"fitted": fit}, witness=dict(c.witness, arrow=a.id))
        return Certificate("uc_diagram", "pass", {"fitted": fit, "arrows": len(D.arrows)})
    for a in D.arrows:
        c = check_upper_control(a.map, rho)
        if not c.passed:
            return Certificate("uc_diagram", "fail", {"control": rho}, witness=dict(c.witness, arrow=a.id))
    return Certificate("uc_diagram", "pass", {"control": rho, "arrows": len(D.arrows)})


# -- codomain and domain maps -------------------------------------------------------

def one_point_space() -> ExplicitMatrix:
    return ExplicitMatrix([()], [[0]], name="point")


def codomain_domain_maps(D: DiagramSpec, limit: int = PRODUCT_LIMIT, check_sample: int = 200, seed: int = 0):
    """``gamma(x) = (x_cod phi)_phi`` and ``delta(x) = (beta_phi x_dom phi)_phi`` on the product window."""
    size = D.product_size()
    if size > limit:
        raise ProductTooLarge(f"product window has {size} tuples (limit {limit}); use tuple_space")
    names = D.names
    tuples = list(itertools.product(*[D.objects[n].window for n in names]))
    src = D.product_space(tuples)
    if not D.arrows:
        pt = one_point_space()
        gamma = MapTable(src, pt, {t: () for t in tuples}, "gamma")
        delta = MapTable(src, pt, {t: () for t in tuples}, "delta")
        return gamma, delta
    pos = {n: i for i, n in enumerate(names)}
    gvals, dvals = {}, {}
    for t in tuples:
        gvals[t] = tuple(t[pos[a.dst]] for a in D.arrows)
        dvals[t] = tuple(a.map(t[pos[a.src]]) for a in D.arrows)
    image = list(dict.fromkeys(list(gvals.values()) + list(dvals.values())))
    cod = ProductLinf([D.objects[a.dst] for a in D.arrows], window=image, name="cod")
    gamma = MapTable(src, cod, gvals, "gamma")
    delta = MapTable(src, cod, dvals, "delta")
    # replay the controls on a seeded sample of tuples
    rng = np.random.default_rng(seed)
    pick = sorted(set(rng.integers(0, len(tuples), size=min(check_sample, len(tuples))).tolist()))
    sample = [tuples[i] for i in pick]
    gc = check_upper_control(gamma.restrict(sample), affine(1, 0))
    if not gc.passed:
        raise AssertionError(f"gamma failed 1-Lipschitz replay: {gc.witness}")
    if D.uniform_control is not None:
        dc = check_upper_control(delta.restrict(sample), D.uniform_control)
        if not dc.passed:
            raise AssertionError(f"delta failed the uniform control replay: {dc.witness}")
    return gamma, delta


# -- constraint solving -------------------------------------------------------------

def arrow_tables(D: DiagramSpec, kappa) -> list:
    """``(i, j, allowed)`` per arrow with ``allowed[a, b] = d_j(b, beta(a)) <= kappa``."""
    kappa = to_fraction(kappa)
    out = []
    for a in D.arrows:
        i, j = D.position(a.src), D.position(a.dst)
        img = a.map.image()
        dj = D.objects[a.dst]
        m = dj.pairwise(img, list(dj.window))
        allowed = m.finite & (m.num <= math.floor(kappa * m.den))
        out.append((i, j, allowed))
    return out


def arc_consistency(domains: list, constraints: list) -> list:
    """Prune boolean domains until every value has support on every constraint."""
    doms = [d.copy() for d in domains]
    for i, j, A in constraints:
        if i == j:
            doms[i] &= np.diag(A)
    changed = True
    while changed:
        changed = False
        for i, j, A in constraints:
            if i == j:
                continue
            sub = A[:, doms[j]]
            new_i = doms[i] & (sub.any(axis=1) if sub.shape[1] else np.zeros_like(doms[i]))
            sub = A[doms[i], :]
            new_j = doms[j] & (sub.any(axis=0) if sub.shape[0] else np.zeros_like(doms[j]))
            if (new_i != doms[i]).any() or (new_j != doms[j]).any():
                doms[i], doms[j] = new_i, new_j
                changed = True
    return doms


def solve_constraints(sizes: Sequence[int], constraints: list, budget: int = SEARCH_BUDGET) -> list:
    """All index tuples satisfying every binary constraint, in lexicographic order."""
    n = len(sizes)
    doms = arc_consistency([np.ones(s, dtype=bool) for s in sizes], constraints)
    if any(not d.any() for d in doms):
        return []
    # constraints oriented from the earlier variable to the later one
    forward = [[] for _ in range(n)]
    for i, j, A in constraints:
        if i == j:
            continue
        if i < j:
            forward[i].append((j, A))
        else:
            forward[j].append((i, A.T))
    out = []
    nodes = 0

    def search(k, doms, prefix):
        nonlocal nodes
        if k == n:
            out.append(tuple(prefix))
            return
        for v in np.flatnonzero(doms[k]):
            nodes += 1
            if nodes > budget:
                raise Overflow(f"tuple search exceeded its budget of {budget} nodes")
            nd = doms
            ok = True
            if forward[k]:
                nd = list(doms)
                for j, A in forward[k]:
                    nd[j] = nd[j] & A[v]
                    if not nd[j].any():
                        ok = False
                        break
            if ok:
                prefix.append(int(v))
                search(k + 1, nd, prefix)
                prefix.pop()

    search(0, doms, [])
    return out


def brute_force_tuples(sizes: Sequence[int], constraints: list, limit: int = PRODUCT_LIMIT) -> list:
    """Filter the full index product; the oracle for :func:`solve_constraints`."""
    total = int(np.prod(sizes)) if sizes else 1
    if total > limit:
        raise ProductTooLarge(f"brute force over {total} tuples exceeds {limit}")
    if total == 0:
        return []
    grids = np.indices(tuple(sizes)).reshape(len(sizes), -1)
    keep = np.ones(grids.shape[1], dtype=bool)
    for i, j, A in constraints:
        keep &= A[grids[i], grids[j]]
    return [tuple(int(c) for c in col) for col in grids[:, keep].T]


class TupleSpace(ProductLinf):
    """Consistent tuples under the l-infinity metric over the object windows."""

    kind = "tuple_space"

    def __init__(self, factors, tuples, kappa, diagram=None, verified=None, name=None):
        super().__init__(factors, window=tuples, name=name)
        self.kappa = to_fraction(kappa)
        self.diagram = diagram
        self.verified = verified

    def with_window(self, window):
        return TupleSpace(self.factors, window, self.kappa, self.diagram, None, self.name)

    def to_json(self):
        from .metric_space import encode_point

        return {"type": self.kind, "kappa": encode_rational(self.kappa),
                "tuples": [encode_point(t) for t in self.window]}


def tuple_space(D: DiagramSpec, kappa, budget: int = SEARCH_BUDGET, verify_limit: int = BRUTE_FORCE_LIMIT) -> TupleSpace:
    """``Tuple_kappa``: tuples with ``d(x_j, beta_phi x_i) <= kappa`` for every arrow."""
    kappa = to_fraction(kappa)
    names = D.names
    wins = [D.objects[n].window for n in names]
    sizes = [len(w) for w in wins]
    cons = arrow_tables(D, kappa)
    idx = solve_constraints(sizes, cons, budget)
    verified = None
    if D.product_size() <= verify_limit:
        brute = brute_force_tuples(sizes, cons)
        if brute != idx:
            raise AssertionError("pruned tuple enumeration disagrees with brute-force filtering")
        verified = True
    tuples = [tuple(w[k] for w, k in zip(wins, t)) for t in idx]
    return TupleSpace(list(D.objects.values()), tuples, kappa, D, verified, name=f"Tuple[{kappa}]")


def rips_tuple(D: DiagramSpec, kappa, sigma) -> RipsGraph:
    T = tuple_space(D, kappa)
    if not T.window:
        raise EmptyTupleSpace(f"Tuple_{kappa} is empty")
    return build_rips(T, sigma)


def tuple_stability_report(D: DiagramSpec, kappa_grid: Sequence) -> StabilityTable:
    grid = sorted(dict.fromkeys(to_fraction(k) for k in kappa_grid))
    members = {k: list(tuple_space(D, k).window) for k in grid}
    everything = list(dict.fromkeys(itertools.chain.from_iterable(members.values())))
    space = D.product_space(everything)
    return stability_table(space, grid, members)


# -- cones ----------------------------------------------------------------------------

@dataclass
class ConeSpec:
    apex: Space
    legs: dict  # object name -> MapTable apex -> D_j
    uniform_control: ControlFn | None = None
    commutativity_bound: Fraction | None = None


def cone_deviation(C: ConeSpec, D: DiagramSpec) -> dict:
    """Exact ``max_w d(mu_j w, beta_phi mu_i w)`` per arrow."""
    out = {}
    for a in D.arrows:
        mi, mj = C.legs[a.src], C.legs[a.dst]
        comp = MapTable(C.apex, D.objects[a.dst], {w: a.map(mi(w)) for w in mi.domain}, name=f"{a.id}∘mu")
        out[a.id] = check_closeness(mj, comp, 0).constants["max"]
    return out


def validate_uc_cone(C: ConeSpec, D: DiagramSpec) -> Certificate:
    """Legs share the uniform control and commute with every bonding up to ``kappa_cone``."""
    rho = C.uniform_control or D.uniform_control or affine(1, 0)
    for name in D.names:
        if name not in C.legs:
            raise InputError(f"cone has no leg for object {name!r}")
        c = check_upper_control(C.legs[name], rho)
        if not c.passed:
            return Certificate("uc_cone", "fail", {"control": rho}, witness=dict(c.witness, leg=name))
    dev = cone_deviation(C, D)
    kcone = max(dev.values(), default=Fraction(0))
    # product formulation: gamma ∘ prod mu vs delta ∘ prod mu in the l-infinity codomain
    prod_kappa = Fraction(0)
    if D.arrows:
        for w in C.apex.window:
            vals = []
            for a in D.arrows:
                dj = D.objects[a.dst]
                vals.append(dj.distance(C.legs[a.dst](w), a.map(C.legs[a.src](w))))
            prod_kappa = max(prod_kappa, max(vals))
    consts = {"control": rho, "kappa_cone": kcone, "per_arrow": dev, "product_kappa": prod_kappa}
    if prod_kappa != kcone:
        raise AssertionError("arrowwise and product closeness bounds disagree")
    if C.commutativity_bound is not None and kcone > to_fraction(C.commutativity_bound):
        worst = max(dev, key=lambda k: dev[k])
        return Certificate("uc_cone", "fail", consts, witness={"arrow": worst, "deviation": dev[worst]})
    if kcone is INF:
        worst = next(k for k, v in dev.items() if v is INF)
        return Certificate("uc_cone", "fail", consts, witness={"arrow": worst, "deviation": INF})
    return Certificate("uc_cone", "pass", consts)


def induced_map(C: ConeSpec, T: TupleSpace, dst: Space | None = None) -> MapTable:
    names = T.diagram.names
    vals = {}
    for w in C.apex.window:
        t = normalize_point(tuple(C.legs[n](w) for n in names))
        if t not in T.index:
            bad = [a.id for a in T.diagram.arrows
                   if T.diagram.objects[a.dst].distance(T.coords(t)[names.index(a.dst)],
                                                        a.map(T.coords(t)[names.index(a.src)])) > T.kappa]
            raise KappaTooSmall(f"apex point {w!r} maps outside Tuple_{T.kappa}",
                                witness={"point": w, "tuple": t, "arrows": bad})
        vals[w] = t
    return MapTable(C.apex, dst or T, vals, name="induced")


def cone_factorization(C: ConeSpec, T: TupleSpace, sigma) -> dict:
    """Induced ``w -> (mu_j w)_j`` into ``Tuple_kappa`` with a fitted control into ``Rips_sigma``."""
    g = build_rips(T, sigma)
    h = induced_map(C, T, g)
    dom = list(h.domain)
    x = C.apex.pairwise(dom, dom)
    y = g.pairwise(h.image(), h.image())
    mask = _upper_pairs(len(dom)) | np.eye(len(dom), dtype=bool)
    best = _samples(x, y, mask)
    fit = fit_affine_upper_control(best.items()) if best else affine(0, 0)
    cert = check_upper_control(h, fit)
    consts = {"sigma": to_fraction(sigma), "kappa": T.kappa, "upper": fit}
    # projections of the induced map reproduce the legs exactly
    names = T.diagram.names
    for w in dom:
        for k, n in enumerate(names):
            if T.coords(h(w))[k] != C.legs[n](w):
                raise AssertionError("induced map does not reproduce a leg")
    if cert.passed:
        return {"induced": h, "certificate": Certificate("cone_factorization", "pass", consts), "control": fit}
    return {"induced": h, "control": fit,
            "certificate": Certificate("cone_factorization", "fail", consts, witness=cert.witness)}


def uniqueness_check(h1: MapTable, h2: MapTable, C: ConeSpec, sigma) -> Certificate:
    """Closeness of two factorizations of one cone, measured in ``Rips_sigma(T)``."""
    T = h1.dst.base if isinstance(h1.dst, RipsGraph) else h1.dst
    g = build_rips(T, sigma)
    names = T.diagram.names if getattr(T, "diagram", None) is not None else list(C.legs)
    leg_dev = {}
    for label, h in (("h1", h1), ("h2", h2)):
        worst = Fraction(0)
        for w in h.domain:
            for k, n in enumerate(names):
                worst = max(worst, T.factors[k].distance(T.coords(h(w))[k], C.legs[n](w)))
        leg_dev[label] = worst
    d = g.paired(h1.image(), h2.image())
    fin = d.finite[0]
    bound = INF if not fin.all() else (Fraction(int(d.num[0].max(initial=0)), d.den))
    consts = {"bound": bound, "leg_deviation": leg_dev, "sigma": to_fraction(sigma)}
    if bound is INF:
        k = int(np.flatnonzero(~fin)[0])
        return Certificate("uniqueness", "fail", consts, witness={"point": h1.domain[k], "distance": INF})
    return Certificate("uniqueness", "pass", consts)


# -- retraction transport ------------------------------------------------------------

def retraction_transport(alpha: dict, omega: dict, K, T: TupleSpace, D2: DiagramSpec, sigma,
                         rho: ControlFn | None = None) -> dict:
    """Push ``Rips_sigma Tuple_kappa(D)`` to ``D2`` along componentwise ``alpha``.

    Emits ``kappa' = 2K + rho(kappa)`` and ``sigma' = max(rho(sigma), K)``
    and replays every hypothesis and conclusion on the windows.
    """
    K = to_fraction(K)
    sigma = to_fraction(sigma)
    D = T.diagram
    rho = rho or D.uniform_control or affine(1, 0)
    names = D.names
    if names != D2.names:
        raise InputError("both diagrams need the same objects in the same order")
    for n in names:
        c = check_upper_control(alpha[n], rho)
        if not c.passed:
            raise PreconditionReplayFailed(f"alpha_{n} is not controlled by {rho}", location={"object": n, **c.witness})
        comp = MapTable(D2.objects[n], D2.objects[n], {p: alpha[n](omega[n](p)) for p in D2.objects[n].window})
        cl = check_closeness(comp, MapTable.identity(D2.objects[n]), K)
        if not cl.passed:
            raise PreconditionReplayFailed(f"alpha∘omega is not K-close to the identity on {n}",
                                           location={"object": n, **cl.witness})
    arrows2 = {a.id: a for a in D2.arrows}
    for a in D.arrows:
        b = arrows2.get(a.id)
        if b is None:
            raise PreconditionReplayFailed(f"arrow {a.id} missing from the target diagram", location={"arrow": a.id})
        dom = list(a.map.domain)
        lhs = MapTable(D.objects[a.src], D2.objects[a.dst], {x: b.map(alpha[a.src](x)) for x in dom})
        rhs = MapTable(D.objects[a.src], D2.objects[a.dst], {x: alpha[a.dst](a.map(x)) for x in dom})
        cl = check_closeness(lhs, rhs, K)
        if not cl.passed:
            raise PreconditionReplayFailed(f"naturality fails on arrow {a.id}", location={"arrow": a.id, **cl.witness})

    kappa2 = 2 * K + rho.eval(T.kappa)
    sigma2 = max(rho.eval(sigma), K)
    T2 = tuple_space(D2, kappa2)
    vals = {t: normalize_point(tuple(alpha[n](T.coords(t)[k]) for k, n in enumerate(names))) for t in T.window}
    outside = [t for t, v in vals.items() if v not in T2.index]
    consts = {"K": K, "kappa": T.kappa, "sigma": sigma, "kappa_prime": kappa2, "sigma_prime": sigma2}
    if outside:
        cert = Certificate("retraction_transport", "fail", consts, witness={"point": outside[0], "reason": "image not in Tuple_kappa'"})
        return {"target": T2, "induced": None, "constants": consts, "certificate": cert}
    induced = MapTable(T, T2, vals, name="alpha_hat")
    lip = _edge_lipschitz(build_rips(T, sigma), induced, sigma2)
    back = _retraction_identity(alpha, omega, names, T2, K)
    checks = {"edge_lipschitz": lip.verdict, "retraction_identity": back.verdict}
    consts["checks"] = checks
    failed = next((c for c in (lip, back) if not c.passed), None)
    cert = (Certificate("retraction_transport", "pass", consts) if failed is None
            else Certificate("retraction_transport", "fail", consts, witness=failed.witness))
    return {"target": T2, "induced": induced, "constants": consts, "certificate": cert}


def _edge_lipschitz(g: RipsGraph, f: MapTable, sigma2) -> Certificate:
    """Every Rips edge maps to a pair at distance ``<= sigma2`` (an edge or one vertex)."""
    W = list(g.window)
    img = [f(p) for p in W]
    d = f.dst.pairwise(img, img)
    bad = g.adjacency & (~d.finite | (d.num > math.floor(to_fraction(sigma2) * d.den)))
    consts = {"sigma_prime": to_fraction(sigma2), "edges": g.edge_count}
    if not bad.any():
        return Certificate("edge_lipschitz", "pass", consts)
    i, j = _first_index(bad)
    return Certificate("edge_lipschitz", "fail", consts,
                       witness={"pair": [W[i], W[j]], "image_distance": d.entry(i, j)})


def _retraction_identity(alpha, omega, names, T2, K) -> Certificate:
    worst = Fraction(0)
    for t in T2.window:
        back = tuple(alpha[n](omega[n](T2.coords(t)[k])) for k, n in enumerate(names))
        dist = T2.distance(back, t)
        if dist > K:
            return Certificate("retraction_identity", "fail", {"K": K}, witness={"point": t, "distance": dist})
        worst = max(worst, dist)
    return Certificate("retraction_identity", "pass", {"K": K, "max": worst})
