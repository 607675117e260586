from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coarse_forge.errors import InputError
from coarse_forge.extdist import (
    INF,
    ScaledMatrix,
    ceil_frac,
    common_den,
    elementwise_max,
    encode_rational,
    ext_add,
    floor_frac,
    threshold_table,
    to_ext,
    to_fraction,
)

rationals = st.fractions(min_value=0, max_value=100, max_denominator=50)


def test_inf_is_a_tagged_singleton():
    assert INF is to_ext("inf")
    assert INF > F(10**30)
    assert not INF < F(0)
    assert ext_add(INF, F(1)) is INF
    with pytest.raises(ArithmeticError):
        INF * 0


def test_encoding():
    assert encode_rational(F(3, 4)) == {"num": 3, "den": 4}
    assert encode_rational(INF) == "inf"
    assert to_fraction({"num": 3, "den": 4}) == F(3, 4)
    assert to_fraction("5/2") == F(5, 2)
    with pytest.raises(InputError):
        to_fraction(0.1 + 0.2 + 1e-300j)


@given(rationals)
def test_floor_ceil(x):
    assert floor_frac(x) <= x <= ceil_frac(x)
    assert ceil_frac(x) - floor_frac(x) in (0, 1)


@given(st.lists(st.lists(st.one_of(rationals, st.just(INF)), min_size=3, max_size=3), min_size=1, max_size=4))
def test_scaled_matrix_roundtrip(rows):
    m = ScaledMatrix.from_entries(rows)
    for i, row in enumerate(rows):
        for j, v in enumerate(row):
            assert m.entry(i, j) == v


@given(st.lists(rationals, min_size=4, max_size=4), st.lists(rationals, min_size=4, max_size=4))
def test_elementwise_max_and_common_den(a, b):
    ma = ScaledMatrix.from_entries([a])
    mb = ScaledMatrix.from_entries([b])
    x, y = common_den(ma, mb)
    assert x.den == y.den
    mx = elementwise_max([ma, mb])
    assert [mx.entry(0, k) for k in range(4)] == [max(p, q) for p, q in zip(a, b)]


@given(st.lists(rationals, min_size=1, max_size=6), st.integers(1, 12))
def test_threshold_table_is_exact(us, den):
    f = lambda u: 2 * u + F(1, 3)
    thr = threshold_table(us, f, den, upper=True)
    for u, t in zip(us, thr):
        assert F(int(t), den) <= f(u) < F(int(t) + 1, den)
    thr = threshold_table(us, f, den, upper=False)
    for u, t in zip(us, thr):
        assert F(int(t) - 1, den) < f(u) <= F(int(t), den)


def test_scaled_matrix_take():
    m = ScaledMatrix(np.arange(9).reshape(3, 3), 2)
    t = m.take([2, 0], [1])
    assert t.entry(0, 0) == F(7, 2) and t.entry(1, 0) == F(1, 2)
