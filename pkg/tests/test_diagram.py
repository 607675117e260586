import itertools
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coarse_forge.controls import affine
from coarse_forge.diagram import (
    Arrow,
    ConeSpec,
    DiagramSpec,
    arrow_tables,
    brute_force_tuples,
    codomain_domain_maps,
    cone_factorization,
    induced_map,
    retraction_transport,
    rips_tuple,
    solve_constraints,
    tuple_space,
    tuple_stability_report,
    uniqueness_check,
    validate_uc_cone,
    validate_uc_diagram,
)
from coarse_forge.errors import EmptyTupleSpace, KappaTooSmall, Overflow, PreconditionReplayFailed, ProductTooLarge
from coarse_forge.extdist import INF
from coarse_forge.metric_space import MapTable, Subspace, z_window
from coarse_forge.rips import build_rips


def Z(lo=-6, hi=6, name=None):
    s = z_window(lo, hi)
    s.name = name or f"Z[{lo},{hi}]"
    return s


def diagonal(lo=-6, hi=6, fn=lambda x: x, control=None):
    a, b = Z(lo, hi, "a"), Z(lo, hi, "b")
    m = MapTable.from_function(a, b, lambda x: max(lo, min(hi, fn(x))), name="beta")
    return DiagramSpec({"a": a, "b": b}, [Arrow("phi", "a", "b", m)], control)


def test_validate_uc_diagram_examples():
    assert validate_uc_diagram(diagonal(), affine(1, 0)).passed
    a, b = Z(-4, 4, "a"), Z(-8, 8, "b")
    dbl = MapTable.from_function(a, b, lambda x: 2 * x, name="dbl")
    idm = MapTable.from_function(a, b, lambda x: x, name="id")
    D = DiagramSpec({"a": a, "b": b}, [Arrow("id", "a", "b", idm), Arrow("dbl", "a", "b", dbl)])
    c = validate_uc_diagram(D, affine(1, 0))
    assert not c.passed and c.witness["arrow"] == "dbl"
    c = validate_uc_diagram(D)
    assert c.passed and c.constants["fitted"] == affine(2, 0)


def test_codomain_domain_maps():
    gamma, delta = codomain_domain_maps(diagonal(-2, 2))
    # gamma = delta exactly on the diagonal
    assert all(gamma((x, x)) == delta((x, x)) for x in range(-2, 3))
    D = DiagramSpec({"a": Z(0, 2, "a"), "b": Z(0, 2, "b")}, [])
    gamma, delta = codomain_domain_maps(D)
    assert len(gamma.dst.window) == 1
    assert all(gamma(p) == delta(p) for p in gamma.domain)
    big = DiagramSpec({k: Z(0, 200, k) for k in "abc"}, [])
    with pytest.raises(ProductTooLarge):
        codomain_domain_maps(big)


def test_tuple_space_examples():
    D = DiagramSpec({"a": Z(-3, 3, "a"), "b": Z(-3, 3, "b")}, [])
    assert len(tuple_space(D, 0).window) == 49
    T0 = tuple_space(diagonal(), 0)
    assert list(T0.window) == [(x, x) for x in range(-6, 7)]
    T1 = tuple_space(diagonal(), 1)
    assert len(T1.window) == 37
    assert all(abs(x - y) <= 1 for x, y in T1.window)
    assert T0.verified and T1.verified


def test_chain_with_shifts():
    objs = {n: Z(-5, 5, n) for n in "ijk"}
    sh = lambda s, d, k: MapTable.from_function(objs[s], objs[d], lambda x: max(-5, min(5, x + k)), name=f"{s}{d}")
    D = DiagramSpec(objs, [Arrow("ij", "i", "j", sh("i", "j", 1)), Arrow("jk", "j", "k", sh("j", "k", -2))])
    T = tuple_space(D, 1)
    want = [t for t in itertools.product(range(-5, 6), repeat=3)
            if abs(t[1] - max(-5, min(5, t[0] + 1))) <= 1 and abs(t[2] - max(-5, min(5, t[1] - 2))) <= 1]
    assert list(T.window) == want


def test_solver_budget():
    cons = []
    with pytest.raises(Overflow):
        solve_constraints([10, 10, 10], cons, budget=50)


@st.composite
def random_diagrams(draw):
    n = draw(st.integers(1, 4))
    objs = {f"o{i}": Z(0, draw(st.integers(0, 5)), f"o{i}") for i in range(n)}
    names = list(objs)
    arrows = []
    for k in range(draw(st.integers(0, 4))):
        s = draw(st.sampled_from(names))
        d = draw(st.sampled_from(names))
        hi = objs[d].window[-1]
        vals = draw(st.lists(st.integers(0, hi), min_size=len(objs[s].window), max_size=len(objs[s].window)))
        arrows.append(Arrow(f"a{k}", s, d, MapTable(objs[s], objs[d], dict(zip(objs[s].window, vals)))))
    return DiagramSpec(objs, arrows)


@given(random_diagrams(), st.integers(0, 3))
@settings(max_examples=80)
def test_pruned_enumeration_matches_brute_force(D, kappa):
    sizes = [len(D.objects[n].window) for n in D.names]
    cons = arrow_tables(D, kappa)
    assert solve_constraints(sizes, cons) == brute_force_tuples(sizes, cons)


@given(random_diagrams(), st.integers(0, 2), st.integers(0, 2))
@settings(max_examples=40)
def test_tuple_space_monotone_in_kappa(D, k1, k2):
    lo, hi = sorted((k1, k2))
    assert set(tuple_space(D, lo).window) <= set(tuple_space(D, hi).window)


def test_rips_tuple_examples():
    D = DiagramSpec({"a": Z(-3, 3, "a"), "b": Z(-3, 3, "b")}, [])
    g = rips_tuple(D, 0, 1)
    for p, q in itertools.product(g.window, repeat=2):
        assert g.distance(p, q) == max(abs(p[0] - q[0]), abs(p[1] - q[1]))
    g = rips_tuple(diagonal(), 0, 1)
    assert all(g.distance((x, x), (y, y)) == abs(x - y) for x in range(-6, 7) for y in range(-6, 7))
    assert rips_tuple(diagonal(), 0, 0).edge_count == 0
    a, b = Z(0, 2, "a"), Z(0, 2, "b")
    far = DiagramSpec({"a": a, "b": b}, [Arrow("phi", "a", "b", MapTable.from_function(a, b, lambda x: 10))])
    with pytest.raises(EmptyTupleSpace):
        rips_tuple(far, 1, 1)


def cone_over(D, shift=0):
    apex = Z(-6, 6, "apex")
    legs = {"a": MapTable.from_function(apex, D.objects["a"], lambda x: x, name="mu_a"),
            "b": MapTable.from_function(apex, D.objects["b"], lambda x: max(-6, min(6, x + shift)), name="mu_b")}
    return ConeSpec(apex, legs, affine(1, 0))


def test_cone_examples():
    D = diagonal()
    c = validate_uc_cone(cone_over(D), D)
    assert c.passed and c.constants["kappa_cone"] == 0
    c = validate_uc_cone(cone_over(D, 3), D)
    assert c.constants["kappa_cone"] == 3 == c.constants["product_kappa"]
    C = cone_over(D, 3)
    C.commutativity_bound = F(2)
    assert not validate_uc_cone(C, D).passed


def test_cone_factorization_examples():
    D = diagonal()
    T = tuple_space(D, 0)
    out = cone_factorization(cone_over(D), T, 1)
    assert out["certificate"].passed and out["control"] == affine(1, 0)
    assert all(out["induced"](x) == (x, x) for x in range(-6, 7))
    T3 = tuple_space(D, 3)
    out = cone_factorization(cone_over(D, 3), T3, 1)
    assert out["certificate"].passed
    with pytest.raises(KappaTooSmall) as e:
        induced_map(cone_over(D, 3), tuple_space(D, 2))
    assert e.value.witness["arrows"] == ["phi"]


def test_uniqueness_examples():
    D = diagonal()
    T = tuple_space(D, 1)
    C = cone_over(D)
    h1 = cone_factorization(C, T, 1)["induced"]
    assert uniqueness_check(h1, h1, C, 1).constants["bound"] == 0
    g = build_rips(T, 1)
    bumped = {x: (x, min(6, x + 1)) for x in range(-6, 7)}
    h2 = MapTable(C.apex, g, bumped, name="h2")
    c = uniqueness_check(h1, h2, C, 1)
    assert c.passed and c.constants["bound"] == 1


def test_tuple_stability_examples():
    D = DiagramSpec({"a": Z(-3, 3, "a"), "b": Z(-3, 3, "b")}, [])
    t = tuple_stability_report(D, [0, 1, 2])
    assert all(r == 0 for r in t.radius.values())
    D = diagonal()
    t = tuple_stability_report(D, [0, 1, 2, 3, 4])
    # direct computation: the farthest band tuple (x, x+k) is ceil(k/2) from the diagonal
    for kp in range(5):
        assert t.radius[(F(0), F(kp))] == (kp + 1) // 2


def test_tuple_stability_parallel_shift():
    # the equaliser of id and shift-by-5 as a tuple space: offsets y - x in [5 - k, k]
    a, b = Z(-4, 4, "a"), Z(-12, 12, "b")
    D = DiagramSpec({"a": a, "b": b}, [
        Arrow("id", "a", "b", MapTable.from_function(a, b, lambda x: x)),
        Arrow("sh", "a", "b", MapTable.from_function(a, b, lambda x: x + 5)),
    ])
    grid = list(range(0, 7))
    t = tuple_stability_report(D, grid)
    sets = {k: [(x, y) for x in range(-4, 5) for y in range(-12, 13) if abs(y - x) <= k and abs(y - x - 5) <= k]
            for k in grid}
    assert {k: len(v) for k, v in sets.items()} == t.sizes
    cheb = lambda p, q: max(abs(p[0] - q[0]), abs(p[1] - q[1]))
    for k, kp in itertools.combinations_with_replacement(grid, 2):
        if not sets[kp]:
            want = 0
        elif not sets[k]:
            want = None
        else:
            want = max(min(cheb(p, q) for q in sets[k]) for p in sets[kp])
        got = t.radius[(F(k), F(kp))]
        assert (got is INF) if want is None else got == want
    assert not t.stabilized


def evens(lo=-6, hi=6):
    base = z_window(lo, hi)
    s = Subspace(base, points=[x for x in range(lo, hi + 1) if x % 2 == 0], name="2Z")
    return s


def even_diagram():
    a, b = evens(), evens()
    a.name, b.name = "a", "b"
    return DiagramSpec({"a": a, "b": b}, [Arrow("phi", "a", "b", MapTable.from_function(a, b, lambda x: x))])


def nearest_even(D, D2):
    alpha = {n: MapTable.from_function(D.objects[n], D2.objects[n], lambda x: 2 * (x // 2), name=f"alpha_{n}")
             for n in D.names}
    omega = {n: MapTable.from_function(D2.objects[n], D.objects[n], lambda x: x, name=f"omega_{n}")
             for n in D.names}
    return alpha, omega


def test_retraction_identity_case():
    D = diagonal()
    T = tuple_space(D, 1)
    ids = {n: MapTable.identity(D.objects[n]) for n in D.names}
    out = retraction_transport(ids, ids, 0, T, D, 1, affine(1, 0))
    assert out["certificate"].passed
    assert out["constants"]["kappa_prime"] == 1 and out["constants"]["sigma_prime"] == 1
    assert list(out["target"].window) == list(T.window)


def test_retraction_nearest_even():
    D, D2 = diagonal(), even_diagram()
    alpha, omega = nearest_even(D, D2)
    T = tuple_space(D, 0)
    # 1 -> 0 and 2 -> 2: no retraction onto 2Z is 1-Lipschitz, so affine(1,0) is refused
    with pytest.raises(PreconditionReplayFailed) as e:
        retraction_transport(alpha, omega, 1, T, D2, 1, affine(1, 0))
    assert e.value.location["object"] == "a"
    out = retraction_transport(alpha, omega, 1, T, D2, 1, affine(1, 1))
    c = out["constants"]
    assert (c["kappa_prime"], c["sigma_prime"]) == (3, 2)
    assert out["certificate"].passed
    assert c["checks"] == {"edge_lipschitz": "pass", "retraction_identity": "pass"}


def test_retraction_naturality_failure():
    D = diagonal()
    D2 = diagonal(fn=lambda x: -x)
    ids = {n: MapTable.identity(D.objects[n]) for n in D.names}
    with pytest.raises(PreconditionReplayFailed) as e:
        retraction_transport(ids, ids, 1, tuple_space(D, 0), D2, 1, affine(1, 0))
    assert e.value.location["arrow"] == "phi"
