import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coarse_forge.controls import affine, exp_base, perp, step_table
from coarse_forge.errors import HypothesisUnverified, InfiniteDistance, UnknownPoint, WeightBelowOne
from coarse_forge.extdist import INF
from coarse_forge.loader import clusters
from coarse_forge.metric_space import ExplicitMatrix, box_window, path_graph, z_window
from coarse_forge.rips import (
    build_rips,
    build_weighted_rips,
    cgeodesic_certificate,
    filtration_sweep,
    find_sigma_rho_path,
    rips_distance,
    shortcut_closed_form,
    shortcut_metric,
    surplus_weight_check,
    verify_sigma_rho_path,
    weight_control_check,
)

Z8 = z_window(-8, 8)


def test_build_rips_examples():
    g = build_rips(Z8, 2)
    assert sorted(g.neighbours(0)) == [-2, -1, 1, 2]
    assert build_rips(Z8, 0).edge_count == 0
    two = clusters(k=2, size=3, gap=10)
    assert len(build_rips(two, 3).components()) == 2


def test_rips_distance_examples():
    assert rips_distance(build_rips(Z8, 2), 0, 5) == 3
    assert rips_distance(build_rips(Z8, 1), 0, 7) == 7
    two = clusters(k=2, size=3, gap=10)
    assert rips_distance(build_rips(two, 3), (0, 0), (1, 0)) is INF
    with pytest.raises(UnknownPoint):
        rips_distance(build_rips(Z8, 1), 0, 99)


@given(st.integers(-8, 8), st.integers(-8, 8), st.fractions(min_value=F(1, 2), max_value=9, max_denominator=4))
def test_lattice_closed_form(x, y, sigma):
    # on Z a chain moves at most floor(sigma) per hop
    g = build_rips(Z8, sigma)
    step = math.floor(sigma)
    want = (0 if x == y else INF) if step == 0 else math.ceil(abs(x - y) / step)
    assert rips_distance(g, x, y) == want
    if want is not INF:
        assert abs(x - y) <= sigma * want


@given(st.integers(1, 5), st.integers(1, 5))
@settings(max_examples=25)
def test_filtration_monotone(s, t):
    W = box_window(2, -3, 3, "L1")
    lo, hi = sorted((s, t))
    a = build_rips(W, lo).window_matrix
    b = build_rips(W, hi).window_matrix
    assert np.all(b.num[a.finite] <= a.num[a.finite])


def test_verify_path_examples():
    Z = z_window(-8, 8)
    assert verify_sigma_rho_path(Z, [0, 1, 2, 3], 1, affine(1, 1)).passed
    c = verify_sigma_rho_path(Z, [0, 5], 1, affine(1, 1))
    assert not c.passed and (c.witness["j"], c.witness["k"], c.witness["bound"]) == (0, 1, "upper")
    c = verify_sigma_rho_path(Z, [0, 1, 0, 1], 1, affine(1, 0))
    assert not c.passed and (c.witness["j"], c.witness["k"], c.witness["bound"]) == (0, 2, "lower")


def test_find_path_examples():
    assert find_sigma_rho_path(Z8, 0, 5, 2, affine(2, 0)) == [0, 2, 4, 5]
    assert find_sigma_rho_path(Z8, 3, 3, 2, affine(2, 0)) == [3]
    gap = ExplicitMatrix([0, 1, 20], [[0, 1, 20], [1, 0, 19], [20, 19, 0]])
    assert find_sigma_rho_path(gap, 0, 20, 2, affine(2, 0)) is None
    with pytest.raises(InfiniteDistance):
        find_sigma_rho_path(ExplicitMatrix(["a", "b"], [[0, INF], [INF, 0]]), "a", "b", 1, affine(1, 1))


def test_cgeodesic_examples():
    c = cgeodesic_certificate(z_window(-16, 16), 1, affine(1, 1))
    assert c.passed and c.constants["path_criterion"] == c.constants["bound_criterion"] == "pass"
    assert cgeodesic_certificate(box_window(2, -4, 4, "Linf"), 1, affine(1, 1)).passed


def test_cgeodesic_fails_on_shortcut():
    short = shortcut_metric(path_graph(256), exp_base(2))
    c = cgeodesic_certificate(short, 1, affine(2, 2), margin=0)
    assert c.verdict == "fail" and "pair" in c.witness


def test_sweep_examples():
    rep = filtration_sweep(z_window(-16, 16), [1, 2, 4])
    consec = [(p["a"], p["b"]) for p in rep.pairs if p["consecutive"]]
    assert consec == [(2, 0), (2, 0)]
    assert rep.evidence_at == 1
    # bounded space: everything is adjacent beyond the diameter
    cl = clusters(k=2, size=2, gap=5)
    rep = filtration_sweep(cl, [5, 6, 7], margin=0)
    assert rep.evidence_at == 5


def test_weighted_examples():
    g = build_weighted_rips(Z8, exp_base(2))
    assert g.edge_weight(0, 3) == 8
    assert g.distance(0, 3) == 6
    one = build_weighted_rips(Z8, step_table([(0, 1)]), 1)
    r = build_rips(Z8, 1)
    assert one.window_matrix.entry(0, 16) == r.window_matrix.entry(0, 16) == 16
    with pytest.raises(WeightBelowOne):
        build_weighted_rips(Z8, affine(F(1, 2), 0))


def test_weight_control():
    assert weight_control_check(Z8, exp_base(2)).passed
    assert weight_control_check(Z8, step_table([(0, 1)]), margin=0).passed


def test_weight_control_negative_control():
    g = build_weighted_rips(z_window(-8, 8), exp_base(2))
    g.weights = g.weights * 8  # corrupt every weight
    g._rows.clear()
    assert not weight_control_check(z_window(-8, 8), exp_base(2), graph=g).passed


def test_surplus_examples():
    c = surplus_weight_check(z_window(-16, 16), exp_base(2), affine(2, 0), 3)
    assert c.passed
    assert surplus_weight_check(z_window(-4, 4), exp_base(2), affine(2, 0), 100).passed
    with pytest.raises(HypothesisUnverified) as e:
        surplus_weight_check(z_window(-16, 16), exp_base(2), affine(2, 0), 1)
    # the scan stops at the first failing distance: t = 1 (3 > 2); t = 2 fails too (5 > 4)
    assert e.value.witness["t"] == 1
    assert affine(2, 0)(2) + 1 > exp_base(2)(2)


@given(st.integers(1, 300))
@settings(max_examples=40)
def test_shortcut_matches_closed_form(n):
    # on a path graph the perp weights are subadditive enough that one edge is optimal
    short = shortcut_metric(path_graph(300), exp_base(2))
    assert short.distance(0, n) == shortcut_closed_form(exp_base(2), n)


def test_shortcut_examples():
    short = shortcut_metric(path_graph(1023), exp_base(2))
    assert short.verification.passed
    assert short.distance(0, 1023) <= perp(exp_base(2))(1023) + 1
    # 10 * log2(1024) + 10 = 110 < 1024
    big = shortcut_metric(path_graph(1024), exp_base(2))
    assert 10 * big.distance(0, 1024) + 10 < 1024
