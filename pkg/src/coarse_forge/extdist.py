"""Extended distances: nonnegative rationals plus a tagged infinity.

Finite distances are :class:`fractions.Fraction`. The value :data:`INF` obeys
``a + INF == INF`` and ``min(a, INF) == a``; it is never a large sentinel.

Window-scale distance tables are held as :class:`ScaledMatrix`: an int64
numerator array over one common positive denominator plus a finiteness mask.
That keeps bulk comparisons vectorised while every entry stays exact.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import total_ordering
from typing import Union

import numpy as np

from .errors import InputError, ScaleOverflow


@total_ordering
class _Infinity:
    """The distinguished extended value; a singleton."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INF"

    def __str__(self):
        return "inf"

    def __hash__(self):
        return hash("coarse_forge.INF")

    def __eq__(self, other):
        return other is self

    def __lt__(self, other):
        return False

    def __gt__(self, other):
        return other is not self

    def __add__(self, other):
        return self

    __radd__ = __add__

    def __mul__(self, other):
        if other == 0:
            raise ArithmeticError("0 * INF is undefined")
        return self

    __rmul__ = __mul__

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()

ExtDist = Union[Fraction, _Infinity]
Rational = Union[int, Fraction]

INT64_MAX = np.iinfo(np.int64).max
# headroom so sums of a few entries cannot wrap
SAFE_LIMIT = 2**62


def is_inf(x) -> bool:
    return x is INF


def to_fraction(x) -> Fraction:
    """Coerce int / Fraction / str / ``{"num","den"}`` to an exact Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise InputError(f"boolean is not a rational: {x!r}")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, dict) and "num" in x:
        den = int(x.get("den", 1))
        if den <= 0:
            raise InputError(f"rational denominator must be positive: {x!r}")
        return Fraction(int(x["num"]), den)
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except ValueError as exc:
            raise InputError(f"not a rational: {x!r}") from exc
    if isinstance(x, float):
        return Fraction(x)
    raise InputError(f"not a rational: {x!r}")


def to_ext(x) -> ExtDist:
    if x is INF or x in ("inf", "∞") or (isinstance(x, float) and math.isinf(x)):
        return INF
    return to_fraction(x)


def encode_rational(x):
    """JSON encoding: ``{"num": int, "den": int}`` or the string ``"inf"``."""
    if x is INF:
        return "inf"
    x = Fraction(x)
    return {"num": x.numerator, "den": x.denominator}


def ext_add(a: ExtDist, b: ExtDist) -> ExtDist:
    if a is INF or b is INF:
        return INF
    return a + b


def ceil_frac(x: Fraction) -> int:
    return -((-x.numerator) // x.denominator)


def floor_frac(x: Fraction) -> int:
    return x.numerator // x.denominator


class ScaledMatrix:
    """Exact rectangular table of extended distances.

    Entry ``(i, j)`` is ``num[i, j] / den`` where ``finite[i, j]`` holds, and
    :data:`INF` elsewhere (``num`` is then 0 and meaningless).
    """

    __slots__ = ("num", "den", "finite")

    def __init__(self, num: np.ndarray, den: int = 1, finite: np.ndarray | None = None):
        num = np.asarray(num, dtype=np.int64)
        if finite is None:
            finite = np.ones(num.shape, dtype=bool)
        self.num = np.where(finite, num, 0)
        self.den = int(den)
        self.finite = np.asarray(finite, dtype=bool)
        if self.den <= 0:
            raise ValueError("denominator must be positive")

    @property
    def shape(self):
        return self.num.shape

    def entry(self, i: int, j: int) -> ExtDist:
        if not self.finite[i, j]:
            return INF
        return Fraction(int(self.num[i, j]), self.den)

    def take(self, rows, cols) -> "ScaledMatrix":
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        idx = np.ix_(rows, cols)
        return ScaledMatrix(self.num[idx], self.den, self.finite[idx])

    def rescale(self, den: int) -> "ScaledMatrix":
        """Same values over a multiple of the current denominator."""
        if den % self.den:
            raise ValueError(f"{den} is not a multiple of {self.den}")
        factor = den // self.den
        if factor == 1:
            return self
        peak = int(self.num.max(initial=0))
        if peak * factor > SAFE_LIMIT:
            raise ScaleOverflow(f"rescaling by {factor} overflows int64")
        return ScaledMatrix(self.num * factor, den, self.finite)

    def values(self) -> list[ExtDist]:
        """Sorted distinct extended values (INF last when present)."""
        out: list[ExtDist] = [Fraction(int(v), self.den) for v in np.unique(self.num[self.finite])]
        if not self.finite.all():
            out.append(INF)
        return out

    def all_integral(self) -> bool:
        return self.den == 1

    @classmethod
    def from_entries(cls, rows: list[list]) -> "ScaledMatrix":
        """Build from nested lists of ``Fraction | INF`` (or ints)."""
        n = len(rows)
        m = len(rows[0]) if n else 0
        den = 1
        for row in rows:
            for v in row:
                if v is not INF:
                    den = math.lcm(den, Fraction(v).denominator)
        num = np.zeros((n, m), dtype=np.int64)
        finite = np.ones((n, m), dtype=bool)
        for i, row in enumerate(rows):
            for j, v in enumerate(row):
                if v is INF:
                    finite[i, j] = False
                else:
                    scaled = Fraction(v) * den
                    if scaled.numerator > SAFE_LIMIT:
                        raise ScaleOverflow("distance too large for exact int64 table")
                    num[i, j] = scaled.numerator
        return cls(num, den, finite)


def common_den(*mats: ScaledMatrix) -> list[ScaledMatrix]:
    den = 1
    for m in mats:
        den = math.lcm(den, m.den)
    return [m.rescale(den) for m in mats]


def elementwise_max(mats: list[ScaledMatrix]) -> ScaledMatrix:
    """Pointwise maximum (the l-infinity combination); INF dominates."""
    mats = common_den(*mats)
    num = mats[0].num.copy()
    finite = mats[0].finite.copy()
    for m in mats[1:]:
        np.maximum(num, m.num, out=num)
        finite &= m.finite
    return ScaledMatrix(num, mats[0].den, finite)


def threshold_table(values: list[Fraction], func, den: int, upper: bool) -> np.ndarray:
    """Integer thresholds on numerators over ``den`` for exact comparison.

    With ``upper`` the entry for ``u`` is ``floor(func(u) * den)`` so that
    ``v / den <= func(u)`` iff ``v <= entry``; otherwise it is
    ``ceil(func(u) * den)`` so that ``v / den >= func(u)`` iff ``v >= entry``.
    Saturates at the int64 range because numerators never reach it.
    """
    out = np.empty(len(values), dtype=np.int64)
    for k, u in enumerate(values):
        fu = func(u)
        if fu is INF:
            out[k] = INT64_MAX if upper else INT64_MAX
            continue
        scaled = Fraction(fu) * den
        t = floor_frac(scaled) if upper else ceil_frac(scaled)
        out[k] = min(max(t, -INT64_MAX), INT64_MAX)
    return out
