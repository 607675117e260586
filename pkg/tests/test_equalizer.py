from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from coarse_forge.equalizer import (
    defect,
    directed_hausdorff,
    equalizer_stability,
    factor_through_equalizer,
    kappa_equalizer,
)
from coarse_forge.errors import MismatchedSpaces
from coarse_forge.extdist import INF
from coarse_forge.metric_space import MapTable, z_window

Z = z_window(-10, 10)
WIDE = z_window(-30, 30)


def ident():
    return MapTable.identity(Z, WIDE)


def shift(k=5):
    return MapTable.from_function(Z, WIDE, lambda n: n + k, name=f"shift{k}")


def neg():
    return MapTable.from_function(Z, WIDE, lambda n: -n, name="neg")


def test_equalizer_examples():
    assert list(kappa_equalizer(ident(), ident(), 0).window) == list(Z.window)
    assert list(kappa_equalizer(ident(), shift(), 4).window) == []
    assert list(kappa_equalizer(ident(), shift(), 5).window) == list(Z.window)
    assert list(kappa_equalizer(ident(), neg(), 2).window) == [-1, 0, 1]


def test_equalizer_metric_is_restricted():
    eq = kappa_equalizer(ident(), neg(), 6)
    assert eq.distance(-3, 3) == 6
    inc = eq.inclusion()
    assert all(inc(p) == p for p in eq.window)


def test_mismatched_pair():
    other = MapTable.identity(z_window(0, 3), WIDE)
    with pytest.raises(MismatchedSpaces):
        kappa_equalizer(ident(), other, 0)


def test_stability_shift():
    t = equalizer_stability(ident(), shift(), range(11))
    assert all(t.radius[(F(5), F(kp))] == 0 for kp in range(5, 11))
    assert t.radius[(F(4), F(5))] is INF
    assert t.threshold == 5


def test_stability_equal_maps():
    t = equalizer_stability(ident(), ident(), [0, 1, 2])
    assert all(r == 0 for r in t.radius.values())
    assert t.threshold == 0


def test_stability_negation_does_not_stabilise():
    t = equalizer_stability(ident(), neg(), [0, 2, 4])
    assert t.radius[(F(2), F(4))] == 1
    assert t.radius[(F(0), F(4))] == 2
    assert not t.stabilized


def test_empty_conventions():
    assert directed_hausdorff(Z, [], []) == 0
    assert directed_hausdorff(Z, [1], []) is INF


def test_csv_columns():
    t = equalizer_stability(ident(), shift(), [4, 5])
    lines = t.to_csv().splitlines()
    assert lines[0] == "kappa,kappa_prime,r"
    assert "4,5,inf" in lines


@given(st.lists(st.integers(-30, 30), min_size=21, max_size=21),
       st.lists(st.integers(0, 40), min_size=2, max_size=6, unique=True))
def test_nested_and_monotone(vals, grid):
    g = MapTable(Z, WIDE, dict(zip(Z.window, vals)), name="g")
    f = ident()
    gaps = defect(f, g)
    grid = sorted(grid)
    sets = {k: set(kappa_equalizer(f, g, k).window) for k in grid}
    for k in grid:
        assert sets[k] == {p for p in Z.window if gaps[p] <= k}
    for a, b in zip(grid, grid[1:]):
        assert sets[a] <= sets[b]
    t = equalizer_stability(f, g, grid)
    key = lambda r: (r is INF, 0 if r is INF else r)
    for i, k in enumerate(grid):
        row = [t.radius[(F(k), F(kp))] for kp in grid[i:]]
        assert [key(r) for r in row] == sorted(key(r) for r in row)
    for j, kp in enumerate(grid):
        col = [t.radius[(F(k), F(kp))] for k in grid[: j + 1]]
        assert [key(r) for r in col] == sorted((key(r) for r in col), reverse=True)


def test_factor_examples():
    h0 = MapTable.from_function(z_window(0, 2), Z, lambda n: 0, name="h0")
    assert factor_through_equalizer(h0, ident(), neg()).kappa_min == 0
    h3 = MapTable.from_function(z_window(0, 2), Z, lambda n: 3, name="h3")
    fac = factor_through_equalizer(h3, ident(), shift(3))
    assert fac.kappa_min == 3


@given(st.lists(st.integers(-10, 10), min_size=5, max_size=5))
def test_factor_replays_membership(vals):
    src = z_window(0, 4)
    h = MapTable(src, Z, dict(zip(src.window, vals)), name="h")
    fac = factor_through_equalizer(h, ident(), neg(), kappa_grid=[0, 5, 10, 25])
    eq = kappa_equalizer(ident(), neg(), fac.kappa_min)
    assert all(fac.corestriction(p) in set(eq.window) for p in src.window)
    assert all(fac.corestriction(p) == h(p) for p in src.window)
    assert fac.kappa_min == max(2 * abs(v) for v in vals)
    assert fac.grid_kappa is None or fac.grid_kappa >= fac.kappa_min
