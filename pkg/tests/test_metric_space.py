from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from coarse_forge.controls import AFF, ALL, affine, generalized_inverse_T
from coarse_forge.errors import InputError, MismatchedSpaces
from coarse_forge.extdist import INF
from coarse_forge.metric_space import (
    ExplicitMatrix,
    Lattice,
    MapTable,
    ProductLinf,
    binary_tree,
    certify_quasi_isometry,
    check_closeness,
    check_coarse_surjectivity,
    check_lower_control,
    check_pullback_sandwich,
    check_upper_control,
    coarse_pullback_metric,
    extremality_report,
    inner_window,
    metric_preorder_check,
    validate_metric,
    z_window,
)
from coarse_forge.rips import build_rips

Z = z_window(-8, 8)
Z32 = z_window(-16, 16)


def double():
    return MapTable.from_function(Z, Z32, lambda n: 2 * n, name="double")


def test_distance_examples():
    assert Lattice(2, "Linf").distance((0, 0), (3, -2)) == 3
    assert Lattice(2, "L1").distance((0, 0), (3, -2)) == 5
    two = ExplicitMatrix(["a", "b", "c"], [[0, 1, INF], [1, 0, INF], [INF, INF, 0]])
    assert two.distance("a", "c") is INF
    P = ProductLinf([z_window(0, 5), z_window(0, 5)])
    assert P.distance((0, 1), (3, 5)) == 4


def test_explicit_matrix_rejects_bad_input():
    with pytest.raises(InputError):
        ExplicitMatrix(["a", "b"], [[0, 1], [2, 0]])
    with pytest.raises(InputError):
        ExplicitMatrix(["a", "b"], [[1, 1], [1, 0]])


def test_upper_control_examples():
    ident = MapTable.identity(Z)
    assert check_upper_control(ident, affine(1, 0)).passed
    c = check_upper_control(double(), affine(1, 0))
    assert not c.passed
    assert c.witness["d_src"] == 1 or c.witness["excess"] > 0
    assert check_upper_control(double(), affine(2, 0)).passed


def test_lower_control_examples():
    assert check_lower_control(MapTable.identity(Z), affine(1, 0)).passed
    const = MapTable.from_function(Z, Z, lambda n: 0, name="const")
    assert not check_lower_control(const, affine(1, 0)).passed
    half = MapTable.from_function(Z, Z, lambda n: n // 2, name="half")
    assert check_lower_control(half, generalized_inverse_T(affine(2, 1))).passed


def test_lower_control_infinite_convention():
    two = ExplicitMatrix(["a", "b"], [[0, INF], [INF, 0]])
    one = ExplicitMatrix(["p"], [[0]])
    collapse = MapTable(two, one, {"a": "p", "b": "p"})
    c = check_lower_control(collapse, affine(1, 0))
    assert not c.passed and c.witness["d_src"] is INF


def test_closeness_examples():
    ident = MapTable.identity(Z, Z32)
    shift = MapTable.from_function(Z, Z32, lambda n: n + 5, name="shift")
    c = check_closeness(ident, ident, 0)
    assert c.passed and c.constants["max"] == 0
    c = check_closeness(ident, shift, 5)
    assert c.passed and c.constants["max"] == 5
    assert not check_closeness(ident, shift, 4).passed


def test_coarse_surjectivity_examples():
    assert check_coarse_surjectivity(MapTable.identity(Z), 0).passed
    c = check_coarse_surjectivity(double(), 1)
    assert c.passed and c.constants["covering_radius"] == 1
    c = check_coarse_surjectivity(double(), 0)
    assert not c.passed and c.witness["point"] % 2 == 1


def test_quasi_isometry_examples():
    c = certify_quasi_isometry(MapTable.identity(Z))
    assert c.passed
    assert c.constants["upper"] == affine(1, 0) and c.constants["lower_rho"] == affine(1, 0)
    assert c.constants["covering_radius"] == 0
    c = certify_quasi_isometry(double(), target_window=range(-14, 15))
    assert c.passed
    assert c.constants["upper"] == affine(2, 0)
    assert c.constants["covering_radius"] == 1
    # replay with the emitted constants
    rho = c.constants["lower_rho"]
    assert check_lower_control(double(), generalized_inverse_T(rho)).passed


def test_quasi_isometry_collapse_fails():
    W = z_window(0, 10)
    const = MapTable.from_function(W, W, lambda n: 0, name="const")
    c = certify_quasi_isometry(const, margin=0)
    assert not c.passed and "pair" in c.witness


def test_inner_window():
    assert inner_window(z_window(-10, 10), F(1, 10)) == list(range(-9, 10))
    assert inner_window(z_window(-10, 10), 0) == list(range(-10, 11))
    with pytest.raises(InputError):
        inner_window(Z, 1)


def test_pullback_examples():
    f = MapTable.from_function(z_window(0, 3), Z32, lambda n: 5 * n, name="five")
    d = coarse_pullback_metric(f)
    assert d.distance(0, 1) == 5
    const = MapTable.from_function(z_window(0, 3), Z32, lambda n: 0, name="const")
    dc = coarse_pullback_metric(const)
    assert all(dc.distance(i, j) == (0 if i == j else 1) for i in range(4) for j in range(4))
    assert check_pullback_sandwich(f, d).passed
    assert check_pullback_sandwich(const, dc).passed


@given(st.lists(st.integers(-16, 16), min_size=6, max_size=6))
def test_pullback_sandwich_property(vals):
    W = z_window(0, 5)
    f = MapTable(W, Z32, dict(zip(range(6), vals)))
    assert check_pullback_sandwich(f, coarse_pullback_metric(f)).passed


def test_preorder_examples():
    W = z_window(-12, 12)
    c = metric_preorder_check(W, W, AFF)
    assert c.passed and (c.constants["a"], c.constants["b"]) == (1, 0)
    d2 = build_rips(W, 2)
    c = metric_preorder_check(d2, W, AFF)
    assert c.passed
    # d_2 <= d: the far-end fit sees a flat last step, the secant candidate replays
    c = metric_preorder_check(W, d2, AFF)
    assert c.passed and c.notes["fit"] == "secant"
    assert check_upper_control(MapTable(d2, W, {n: n for n in W.window}), affine(2, 0)).passed
    assert metric_preorder_check(W, d2, ALL).passed


def test_preorder_needs_one_window():
    with pytest.raises(MismatchedSpaces):
        metric_preorder_check(z_window(0, 3), z_window(0, 4))


def test_preorder_transitive_on_rips_chain():
    W = z_window(-12, 12)
    d1, d2, d3 = build_rips(W, 1), build_rips(W, 2), build_rips(W, 3)
    assert metric_preorder_check(d1, d2).passed and metric_preorder_check(d2, d3).passed
    assert metric_preorder_check(d1, d3).passed


def test_extremality_report():
    W = z_window(-12, 12)
    rep = extremality_report(W, 2, [W, build_rips(W, 1), build_rips(W, 2)])
    assert rep["verdict"] == "pass" and rep["maximal_on_window"]


def test_validate_metric():
    assert validate_metric(Z).passed
    assert validate_metric(binary_tree(3)).passed
    bad = ExplicitMatrix(["a", "b", "c"], [[0, 1, 5], [1, 0, 1], [5, 1, 0]])
    c = validate_metric(bad)
    assert not c.passed and c.witness["reason"] == "triangle inequality"
    big = z_window(-60, 60)
    c = validate_metric(big, seed=3)
    assert c.constants["mode"] == "sampled" and c.constants["seed"] == 3

