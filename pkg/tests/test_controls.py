from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coarse_forge.controls import (
    AFF,
    ALL,
    EPS,
    POLY,
    _pow_cmp,
    affine,
    compare_at,
    compose,
    constant_one,
    control_from_json,
    dominates_eventually,
    exp_base,
    fit_affine_upper_control,
    generalized_inverse_T,
    identity,
    parse_control,
    perp,
    polynomial,
    step_table,
)
from coarse_forge.errors import InexactValue, InputError, NotProper

dyadic = st.integers(0, 4000).map(lambda k: F(k, 16))
small_affine = st.tuples(st.integers(1, 6), st.integers(0, 5)).map(lambda ab: affine(ab[0], ab[1]))


def test_eval_examples():
    assert affine(1, 1)(3) == 4
    assert exp_base(2)(3) == 8
    assert step_table([(0, 1), (2, 5)])(1) == 1
    assert step_table([(0, 1), (2, 5)])(2) == 5


def test_exp_at_noninteger_is_inexact():
    with pytest.raises(InexactValue):
        exp_base(2).eval(F(1, 2))


def test_inverse_examples():
    # scan-verified: inf{s : 6 <= 2s} = 3
    assert generalized_inverse_T(affine(2, 0))(6) == 3
    assert generalized_inverse_T(affine(1, 0))(F(7, 3)) == F(7, 3)
    assert generalized_inverse_T(affine(1, 1))(F(1, 2)) == 0
    assert generalized_inverse_T(affine(1, 1))(5) == 4


def test_perp_examples():
    assert perp(exp_base(2))(8) == 3
    assert perp(affine(1, 0))(5) == 5
    assert perp(affine(1, 1))(4) == 3


def test_perp_of_empty_set_is_zero():
    # affine(1,1)(0) = 1 > 1/2, so no s qualifies
    assert perp(affine(1, 1))(F(1, 2)) == 0


def test_bounded_forms_refuse_inverses():
    with pytest.raises(NotProper):
        generalized_inverse_T(constant_one())
    with pytest.raises(NotProper):
        perp(affine(0, 3))


def test_compose_examples():
    assert compose(affine(2, 0), affine(3, 1))(1) == 8
    assert compose(exp_base(2), affine(1, 1))(2) == 8
    f = polynomial([1, 0, 2])
    for t in range(10):
        assert compose(f, identity())(t) == f(t)


def test_dominates_examples():
    d = dominates_eventually(exp_base(2), affine(2, 1), 64)
    assert d.verdict == "holds" and d.threshold == 3
    d = dominates_eventually(exp_base(2), affine(1, 1), 64)
    assert d.verdict == "holds" and d.threshold == 2
    assert dominates_eventually(affine(1, 0), affine(1, 0), 64).verdict == "fails"


def test_fit_examples():
    assert fit_affine_upper_control([(1, 2), (2, 4)]) == affine(2, 0)
    assert fit_affine_upper_control([(0, 0)]) == affine(0, 0)
    assert fit_affine_upper_control([(1, 3), (4, 3)]) == affine(0, 3)
    with pytest.raises(InputError):
        fit_affine_upper_control([])


def test_class_membership():
    for c in (AFF, POLY, ALL):
        assert c.contains(affine(3, 2))
    assert not AFF.contains(polynomial([0, 0, 1]))
    assert POLY.contains(polynomial([0, 0, 1]))
    assert not POLY.contains(exp_base(2))
    assert ALL.contains(exp_base(2))
    assert AFF <= POLY <= ALL


def test_json_roundtrip():
    forms = [affine(2, F(1, 3)), polynomial([1, 0, 2]), exp_base(3),
             step_table([(0, 0), (1, 2)], tail_slope=1), compose(exp_base(2), affine(1, 1)),
             generalized_inverse_T(affine(2, 0)), perp(exp_base(2))]
    for f in forms:
        g = control_from_json(f.to_json())
        for t in (0, 1, 2, 5):
            assert g(t) == f(t)


def test_parse_control_syntaxes():
    assert parse_control("affine:2,1") == affine(2, 1)
    assert parse_control("affine(2,1)") == affine(2, 1)
    assert parse_control("perp(exp_base(2))")(8) == 3
    with pytest.raises(InputError):
        parse_control("nonsense")


def test_pow_cmp_matches_integer_powers():
    # 2^(p/q) >= t  <=>  2^p >= t^q for t > 0: an exact oracle for small q
    for p in range(0, 40):
        for q in (1, 2, 3, 5, 8):
            for t in (F(1), F(3), F(7, 2), F(100), F(2**5), F(1025, 1024)):
                s = F(p, q)
                want = (2**p > t**q) - (2**p < t**q)
                assert _pow_cmp(2, s, t) == want


@given(small_affine, dyadic, dyadic)
def test_inverse_duality(rho, t, s):
    g = generalized_inverse_T(rho)
    assert (g(t) <= s) == (t <= rho(s))


@given(small_affine, dyadic)
def test_inverse_sandwich(rho, t):
    g = generalized_inverse_T(rho)
    assert g(rho(t)) <= t
    assert t <= rho(g(t))


@given(st.integers(0, 300).map(lambda k: F(k, 4)))
@settings(max_examples=60)
def test_exp_inverse_on_lattice(t):
    g = generalized_inverse_T(exp_base(2))(t)
    assert g.denominator <= EPS.denominator
    assert exp_base(2).at_least(g, t)
    if g > 0:
        assert not exp_base(2).at_least(g - EPS, t)


@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 40)), min_size=1, max_size=12))
def test_fit_dominates_every_sample(samples):
    f = fit_affine_upper_control(samples)
    assert all(f(a) >= b for a, b in samples)
    assert f.a >= 0 and f.b >= 0


@given(st.lists(st.integers(0, 30), min_size=2, max_size=20))
def test_eval_is_monotone(ts):
    ts = sorted(ts)
    for f in (affine(2, 1), polynomial([1, 1, 1]), exp_base(2), step_table([(0, 0), (3, 2), (7, 9)], tail_slope=2)):
        vals = [f(t) for t in ts]
        assert vals == sorted(vals)


def test_compare_at_handles_irrational_side():
    assert compare_at(exp_base(2), affine(1, 0), F(1, 2)) == 1
    assert compare_at(affine(0, 2), exp_base(2), 1) == 0


@given(dyadic, dyadic)
def test_step_table_inverse_duality(t, s):
    rho = step_table([(0, 0), (1, 1), (2, 3), (4, 4), (8, 10)], tail_slope=1)
    g = generalized_inverse_T(rho)
    assert (g(t) <= s) == (t <= rho(s))


@given(st.integers(0, 400).map(lambda k: F(k, 8)))
@settings(max_examples=60)
def test_perp_lattice_equivalence_for_exp(t):
    p = perp(exp_base(2))(t)
    theta = exp_base(2)
    # theta(s) <= t exactly for s = perp(t), and fails one lattice step above
    if theta.at_most(0, t):
        assert theta.at_most(p, t)
    assert not theta.at_most(p + EPS, t)
