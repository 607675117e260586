"""Control functions: nondecreasing maps ``[0, inf) -> [0, inf)``.

Closed forms (affine, polynomial, exponential, step table) evaluate exactly
over :class:`~fractions.Fraction`. Generalised inverses of affine and
step-table forms are exact rationals. Other forms are evaluated by bisection
on the dyadic lattice ``EPS * Z>=0``; on that lattice the defining
equivalences hold exactly::

    inverse_T(rho)(t) <= s   <=>  t <= rho(s)
    theta(s) <= t            <=>  s <= perp(theta)(t)

for every lattice point ``s``. (A step table's perp is the supremum of a
half-open step, which is not attained at the jump itself.)
"""

from __future__ import annotations

import decimal
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

from .errors import DomainExceeded, InexactValue, InputError, NotProper
from .extdist import INF, encode_rational, to_fraction

EPS = Fraction(1, 2**20)

# (rank, degree): rank 0 bounded, 1 logarithmic, 2 polynomial, 3 exponential.
# degree None means "polynomial of unknown finite degree".
_BOUNDED = (0, Fraction(0))
_LOG = (1, Fraction(0))
_EXP = (3, Fraction(0))


def _poly(deg):
    return (2, deg)


class ControlFn:
    """Base class. Concrete forms are frozen dataclasses below."""

    form: str = ""

    def __call__(self, t) -> Fraction:
        return self.eval(t)

    def eval(self, t) -> Fraction:
        raise NotImplementedError

    def at_least(self, s, t) -> bool:
        """Exact test of ``self(s) >= t``."""
        return self.eval(s) >= t

    def at_most(self, s, t) -> bool:
        """Exact test of ``self(s) <= t``."""
        return self.eval(s) <= t

    def float_inverse(self, t) -> float | None:
        """Approximate ``s`` with ``self(s) = t``; only a search hint."""
        return None

    def exact_inverse_T(self, t) -> Fraction | None:
        """``inf{s >= 0 : t <= self(s)}`` in closed form, when the form has one."""
        return None

    def exact_perp(self, t) -> Fraction | None:
        """``sup{s >= 0 : self(s) <= t}`` in closed form, when the form has one."""
        return None

    @property
    def proper(self) -> bool:
        return self.growth()[0] > 0

    def growth(self):
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


def _nonneg(x, what) -> Fraction:
    x = to_fraction(x)
    if x < 0:
        raise InputError(f"{what} must be nonnegative, got {x}")
    return x


@dataclass(frozen=True)
class Affine(ControlFn):
    a: Fraction
    b: Fraction = Fraction(0)
    form = "affine"

    def __post_init__(self):
        object.__setattr__(self, "a", _nonneg(self.a, "slope"))
        object.__setattr__(self, "b", _nonneg(self.b, "offset"))

    def eval(self, t):
        return self.a * to_fraction(t) + self.b

    def growth(self):
        return _poly(Fraction(1)) if self.a > 0 else _BOUNDED

    def float_inverse(self, t):
        return max(0.0, float((to_fraction(t) - self.b) / self.a)) if self.a > 0 else None

    def exact_inverse_T(self, t):
        if self.a == 0:
            return None
        return max(Fraction(0), (to_fraction(t) - self.b) / self.a)

    def exact_perp(self, t):
        if self.a == 0:
            return None
        t = to_fraction(t)
        return Fraction(0) if t < self.b else (t - self.b) / self.a

    def to_json(self):
        return {"form": "affine", "a": encode_rational(self.a), "b": encode_rational(self.b)}

    def __repr__(self):
        return f"affine({self.a}, {self.b})"


@dataclass(frozen=True)
class Polynomial(ControlFn):
    coeffs: tuple  # coeffs[k] multiplies t**k
    form = "polynomial"

    def __post_init__(self):
        cs = tuple(_nonneg(c, "coefficient") for c in self.coeffs)
        if not cs:
            cs = (Fraction(0),)
        object.__setattr__(self, "coeffs", cs)

    def eval(self, t):
        t = to_fraction(t)
        acc = Fraction(0)
        for c in reversed(self.coeffs):
            acc = acc * t + c
        return acc

    @property
    def degree(self) -> int:
        for k in range(len(self.coeffs) - 1, 0, -1):
            if self.coeffs[k] > 0:
                return k
        return 0

    def growth(self):
        d = self.degree
        return _poly(Fraction(d)) if d > 0 else _BOUNDED

    def to_json(self):
        return {"form": "polynomial", "coeffs": [encode_rational(c) for c in self.coeffs]}

    def __repr__(self):
        return f"polynomial{tuple(str(c) for c in self.coeffs)}"


def _pow_cmp(base: int, s: Fraction, t: Fraction) -> int:
    """Sign of ``base**s - t`` decided exactly.

    For non-integer ``s`` the power is irrational, so it never equals the
    rational ``t``; comparing logarithms at rising precision terminates.
    """
    if t <= 0:
        return 1
    if s.denominator == 1:
        v = base ** s.numerator
        return (v > t) - (v < t)
    lhs = float(s) * math.log(base)
    rhs = math.log(t.numerator) - math.log(t.denominator)
    diff = lhs - rhs
    if abs(diff) > 1e-12 * max(1.0, abs(lhs), abs(rhs)):
        return 1 if diff > 0 else -1
    prec = 50
    while True:
        with decimal.localcontext() as ctx:
            ctx.prec = prec
            D = decimal.Decimal
            left = D(s.numerator) / D(s.denominator) * D(base).ln()
            right = D(t.numerator).ln() - D(t.denominator).ln()
            gap = left - right
            scale = max(abs(left), abs(right), D(1))
            if abs(gap) > scale * D(10) ** (10 - prec):
                return 1 if gap > 0 else -1
        prec *= 2


@dataclass(frozen=True)
class ExpBase(ControlFn):
    base: int = 2
    form = "exp_base"

    def __post_init__(self):
        if not isinstance(self.base, int) or self.base < 2:
            raise InputError(f"exp_base needs an integer base >= 2, got {self.base!r}")

    def eval(self, t):
        t = to_fraction(t)
        if t.denominator != 1:
            raise InexactValue(f"{self.base}**{t} is irrational")
        return Fraction(self.base**t.numerator)

    def at_least(self, s, t):
        return _pow_cmp(self.base, to_fraction(s), to_fraction(t)) >= 0

    def at_most(self, s, t):
        return _pow_cmp(self.base, to_fraction(s), to_fraction(t)) <= 0

    def growth(self):
        return _EXP

    def float_inverse(self, t):
        t = to_fraction(t)
        if t <= 1:
            return 0.0
        return (math.log(t.numerator) - math.log(t.denominator)) / math.log(self.base)

    def to_json(self):
        return {"form": "exp_base", "base": self.base}

    def __repr__(self):
        return f"exp_base({self.base})"


@dataclass(frozen=True)
class StepTable(ControlFn):
    """Right-continuous step function.

    The value at ``t`` is the value of the last breakpoint ``<= t``; below the
    first breakpoint it is the first value. Past the last breakpoint the value
    grows with ``tail_slope``. ``domain_bound`` (if set) caps admissible ``t``.
    """

    breakpoints: tuple
    tail_slope: Fraction = Fraction(0)
    domain_bound: Fraction | None = None
    declared_proper: bool | None = None
    form = "step_table"

    def __post_init__(self):
        bps = tuple((_nonneg(t, "breakpoint"), _nonneg(v, "value")) for t, v in self.breakpoints)
        if not bps:
            raise InputError("step_table needs at least one breakpoint")
        for (t0, v0), (t1, v1) in zip(bps, bps[1:]):
            if t1 <= t0:
                raise InputError("step_table breakpoints must be strictly increasing")
            if v1 < v0:
                raise InputError("step_table values must be nondecreasing")
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "tail_slope", _nonneg(self.tail_slope, "tail_slope"))
        if self.domain_bound is not None:
            object.__setattr__(self, "domain_bound", _nonneg(self.domain_bound, "domain_bound"))
        tail_proper = self.tail_slope > 0
        if self.declared_proper is not None and bool(self.declared_proper) != tail_proper:
            raise InputError(
                f"step_table declared proper={self.declared_proper} but its tail slope is {self.tail_slope}"
            )

    def eval(self, t):
        t = to_fraction(t)
        if self.domain_bound is not None and t > self.domain_bound:
            raise DomainExceeded(f"t={t} beyond domain bound {self.domain_bound}")
        bps = self.breakpoints
        last_t, last_v = bps[-1]
        if t >= last_t:
            return last_v + self.tail_slope * (t - last_t)
        value = bps[0][1]
        for bt, bv in bps:
            if bt <= t:
                value = bv
            else:
                break
        return value

    def growth(self):
        return _poly(Fraction(1)) if self.tail_slope > 0 else _BOUNDED

    def float_inverse(self, t):
        t = to_fraction(t)
        for bt, bv in self.breakpoints:
            if bv >= t:
                return float(bt)
        last_t, last_v = self.breakpoints[-1]
        return float(last_t + (t - last_v) / self.tail_slope) if self.tail_slope > 0 else None

    def exact_inverse_T(self, t):
        if self.tail_slope == 0 or self.domain_bound is not None:
            return None
        t = to_fraction(t)
        bps = self.breakpoints
        if bps[0][1] >= t:
            return Fraction(0)
        for bt, bv in bps[1:]:
            if bv >= t:
                return bt
        last_t, last_v = bps[-1]
        return last_t + (t - last_v) / self.tail_slope

    def exact_perp(self, t):
        if self.tail_slope == 0 or self.domain_bound is not None:
            return None
        t = to_fraction(t)
        bps = self.breakpoints
        if bps[0][1] > t:
            return Fraction(0)
        for bt, bv in bps[1:]:
            if bv > t:
                return bt  # the supremum of a half-open step, not attained
        last_t, last_v = bps[-1]
        return last_t + (t - last_v) / self.tail_slope

    def to_json(self):
        out = {
            "form": "step_table",
            "breakpoints": [[encode_rational(t), encode_rational(v)] for t, v in self.breakpoints],
            "proper": self.tail_slope > 0,
        }
        if self.tail_slope:
            out["tail_slope"] = encode_rational(self.tail_slope)
        if self.domain_bound is not None:
            out["domain_bound"] = encode_rational(self.domain_bound)
        return out


@dataclass(frozen=True)
class Composed(ControlFn):
    outer: ControlFn
    inner: ControlFn
    form = "composed"

    def eval(self, t):
        return self.outer.eval(self.inner.eval(t))

    def at_least(self, s, t):
        return self.outer.at_least(self.inner.eval(s), t)

    def at_most(self, s, t):
        return self.outer.at_most(self.inner.eval(s), t)

    def growth(self):
        return _compose_growth(self.outer.growth(), self.inner.growth())

    def to_json(self):
        return {"form": "composed", "outer": self.outer.to_json(), "inner": self.inner.to_json()}


def _bisect_min(pred, start: int = 0, hint: int | None = None) -> int:
    """Least integer ``m >= start`` with ``pred(m)`` for a monotone predicate.

    ``hint`` only seeds the bracket; the answer is exact whatever its quality.
    """
    if pred(start):
        return start
    if hint is not None and hint > start:
        # gallop outward from the hint to a bracket lo < answer <= hi
        step = 1
        if pred(hint):
            hi = hint
            lo = hint - 1
            while lo > start and pred(lo):
                hi = lo
                lo = max(start, lo - step)
                step *= 2
        else:
            lo = hint
            hi = hint + 1
            while not pred(hi):
                lo = hi
                hi += step
                step *= 2
                if hi > 2**200:
                    raise NotProper("bracket search diverged; function appears bounded")
    else:
        lo, hi = start, max(1, start * 2)
        while not pred(hi):
            lo, hi = hi, hi * 2
            if hi > 2**200:
                raise NotProper("bracket search diverged; function appears bounded")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _lattice_hint(x: float | None, eps: Fraction) -> int | None:
    if x is None or not math.isfinite(x) or x < 0 or x > 2.0**150:
        return None
    return int(x / float(eps))


@lru_cache(maxsize=1 << 16)
def _inverse_t_eval(rho: ControlFn, t: Fraction, eps: Fraction) -> Fraction:
    exact = rho.exact_inverse_T(t)
    if exact is not None:
        return exact
    m = _bisect_min(lambda k: rho.at_least(k * eps, t), hint=_lattice_hint(rho.float_inverse(t), eps))
    return m * eps


@lru_cache(maxsize=1 << 16)
def _perp_eval(theta: ControlFn, t: Fraction, eps: Fraction) -> Fraction:
    exact = theta.exact_perp(t)
    if exact is not None:
        return exact
    if not theta.at_most(Fraction(0), t):
        # empty set: the supremum is taken as 0 (codomain is [0, inf))
        return Fraction(0)
    m = _bisect_min(lambda k: not theta.at_most(k * eps, t), hint=_lattice_hint(theta.float_inverse(t), eps))
    return (m - 1) * eps


@dataclass(frozen=True)
class InverseT(ControlFn):
    """``t -> inf{s >= 0 : t <= of(s)}``, exact or over the dyadic lattice."""

    of: ControlFn
    eps: Fraction = EPS
    form = "inverse_T"

    def __post_init__(self):
        if not self.of.proper:
            raise NotProper(f"{self.of!r} is bounded; its generalised inverse is not defined")

    def eval(self, t):
        return _inverse_t_eval(self.of, to_fraction(t), self.eps)

    def growth(self):
        return _invert_growth(self.of.growth())

    def to_json(self):
        return {"form": "inverse_T", "of": self.of.to_json()}


@dataclass(frozen=True)
class Perp(ControlFn):
    """``t -> sup{s >= 0 : of(s) <= t}``, exact or over the dyadic lattice."""

    of: ControlFn
    eps: Fraction = EPS
    form = "perp"

    def __post_init__(self):
        if not self.of.proper:
            raise NotProper(f"{self.of!r} is bounded; perp would be infinite")

    def eval(self, t):
        return _perp_eval(self.of, to_fraction(t), self.eps)

    def growth(self):
        return _invert_growth(self.of.growth())

    def to_json(self):
        return {"form": "perp", "of": self.of.to_json()}


def _invert_growth(g):
    rank, deg = g
    if rank == 0:
        return _BOUNDED
    if rank == 1:
        return _EXP
    if rank == 3:
        return _LOG
    return _poly(None if deg is None else 1 / deg)


def _compose_growth(outer, inner):
    if outer[0] == 0 or inner[0] == 0:
        return _BOUNDED
    ro, do = outer
    ri, di = inner
    if ro == 1:
        # log of anything polynomial stays logarithmic; log of exp is linear-ish
        return _poly(None) if ri == 3 else _LOG
    if ro == 2:
        if ri == 1:
            return _LOG
        if ri == 3:
            return _EXP
        return _poly(None if (do is None or di is None) else do * di)
    # exponential outer
    if ri == 1:
        return _poly(None)
    return _EXP


# -- public operations --------------------------------------------------

def affine(a, b=0) -> Affine:
    return Affine(to_fraction(a), to_fraction(b))


def identity() -> Affine:
    return Affine(Fraction(1), Fraction(0))


def polynomial(coeffs: Sequence) -> Polynomial:
    return Polynomial(tuple(coeffs))


def exp_base(base: int = 2) -> ExpBase:
    return ExpBase(base)


def step_table(breakpoints, tail_slope=0, domain_bound=None, proper=None) -> StepTable:
    return StepTable(
        tuple(tuple(bp) for bp in breakpoints),
        to_fraction(tail_slope),
        None if domain_bound is None else to_fraction(domain_bound),
        proper,
    )


def constant_one() -> StepTable:
    """The weight function ``t -> 1``."""
    return step_table([(0, 1)])


def evaluate(f: ControlFn, t) -> Fraction:
    return f.eval(to_fraction(t))


def generalized_inverse_T(rho: ControlFn) -> InverseT:
    return InverseT(rho)


def perp(theta: ControlFn) -> Perp:
    return Perp(theta)


def compose(outer: ControlFn, inner: ControlFn) -> Composed:
    return Composed(outer, inner)


def compare_at(f: ControlFn, g: ControlFn, t) -> int:
    """Sign of ``f(t) - g(t)``, exactly, even when one side is an exponential."""
    t = to_fraction(t)
    try:
        fv = f.eval(t)
    except InexactValue:
        gv = g.eval(t)
        if f.at_most(t, gv) and f.at_least(t, gv):
            return 0
        return 1 if f.at_least(t, gv) else -1
    if g.at_most(t, fv) and g.at_least(t, fv):
        return 0
    return -1 if g.at_least(t, fv) else 1


@dataclass(frozen=True)
class Domination:
    verdict: str  # "holds" | "fails" | "inconclusive"
    threshold: Fraction | None = None
    witness: Fraction | None = None
    scan_bound: Fraction | None = None
    label: str = "window-certified"

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"

    def to_json(self):
        out = {"verdict": self.verdict, "label": self.label, "scan_bound": encode_rational(self.scan_bound)}
        if self.threshold is not None:
            out["threshold"] = encode_rational(self.threshold)
        if self.witness is not None:
            out["witness"] = encode_rational(self.witness)
        return out


def dominates_eventually(theta: ControlFn, rho: ControlFn, scan_bound, step=1) -> Domination:
    """Window evidence that ``rho(t) < theta(t)`` for all large ``t``.

    Scans the grid ``0, step, ..., scan_bound``. Holds when strict domination
    covers a suffix reaching back to at most half the window (``threshold`` is
    the least grid point of that suffix); fails when ``rho >= theta`` at the
    last grid point; anything else is inconclusive.
    """
    scan_bound = to_fraction(scan_bound)
    step = to_fraction(step)
    if step <= 0:
        raise InputError("step must be positive")
    n = int(scan_bound // step)
    grid = [k * step for k in range(n + 1)]
    last_bad = None
    for t in grid:
        if compare_at(rho, theta, t) >= 0:
            last_bad = t
    if last_bad == grid[-1]:
        return Domination("fails", witness=last_bad, scan_bound=scan_bound)
    t0 = grid[0] if last_bad is None else last_bad + step
    if t0 <= scan_bound / 2:
        return Domination("holds", threshold=t0, scan_bound=scan_bound)
    return Domination("inconclusive", threshold=t0, witness=last_bad, scan_bound=scan_bound)


def fit_affine_upper_control(samples: Iterable) -> Affine:
    """Tightest-at-the-far-end affine bound over ``(t_in, t_out)`` samples.

    Among affine ``a*t + b`` (``a, b >= 0``) dominating every sample, choose
    the one with the least value at the largest sampled ``t_in`` and then the
    least offset. The slope is the minimum of the slopes from the far-end
    sample back to every other sample and to the origin, clamped at 0.
    """
    best: dict[Fraction, Fraction] = {}
    for t_in, t_out in samples:
        t_in, t_out = to_fraction(t_in), to_fraction(t_out)
        if t_in < 0 or t_out < 0:
            raise InputError("samples must be nonnegative")
        if t_in not in best or t_out > best[t_in]:
            best[t_in] = t_out
    if not best:
        raise InputError("fit_affine_upper_control needs at least one sample")
    return _fit_reduced(best)


def _fit_reduced(best: dict) -> Affine:
    far = max(best)
    far_out = best[far]
    if far == 0:
        return Affine(Fraction(0), far_out)
    slope = far_out / far
    for t_in, t_out in best.items():
        if t_in < far:
            slope = min(slope, (far_out - t_out) / (far - t_in))
    slope = max(slope, Fraction(0))
    offset = max(t_out - slope * t_in for t_in, t_out in best.items())
    return Affine(slope, max(offset, Fraction(0)))


# -- control classes ------------------------------------------------------

CLASSES = ("Aff", "Poly", "All")


@dataclass(frozen=True)
class ControlClass:
    kind: str

    def __post_init__(self):
        if self.kind not in CLASSES:
            raise InputError(f"unknown control class {self.kind!r}; expected one of {CLASSES}")

    def contains(self, f: ControlFn) -> bool:
        rank, deg = f.growth()
        if self.kind == "All":
            return True
        if self.kind == "Poly":
            return rank <= 2
        if rank < 2:
            return True
        return rank == 2 and deg is not None and deg <= 1

    def __le__(self, other: "ControlClass") -> bool:
        return CLASSES.index(self.kind) <= CLASSES.index(other.kind)


AFF, POLY, ALL = ControlClass("Aff"), ControlClass("Poly"), ControlClass("All")


# -- JSON -----------------------------------------------------------------

def control_from_json(obj) -> ControlFn:
    if isinstance(obj, str):
        return parse_control(obj)
    if not isinstance(obj, dict) or "form" not in obj:
        raise InputError(f"control function JSON needs a 'form' key: {obj!r}")
    form = obj["form"]
    if form == "affine":
        return affine(to_fraction(obj.get("a", 0)), to_fraction(obj.get("b", 0)))
    if form == "polynomial":
        return polynomial([to_fraction(c) for c in obj["coeffs"]])
    if form == "exp_base":
        return exp_base(int(obj.get("base", 2)))
    if form == "step_table":
        bps = [(to_fraction(t), to_fraction(v)) for t, v in obj["breakpoints"]]
        bound = obj.get("domain_bound")
        return step_table(
            bps,
            to_fraction(obj.get("tail_slope", 0)),
            None if bound is None else to_fraction(bound),
            obj.get("proper"),
        )
    if form == "composed":
        return compose(control_from_json(obj["outer"]), control_from_json(obj["inner"]))
    if form == "inverse_T":
        return generalized_inverse_T(control_from_json(obj["of"]))
    if form == "perp":
        return perp(control_from_json(obj["of"]))
    raise InputError(f"unknown control form {form!r}")


def control_to_json(f: ControlFn) -> dict:
    return f.to_json()


def parse_control(text: str) -> ControlFn:
    """Compact CLI syntax: ``affine:a,b``, ``exp:2``, ``poly:c0,c1,...``, ``one``, ``id``.

    Call syntax works too (``affine(2,1)``, ``perp(exp_base(2))``). Anything
    starting with ``{`` is parsed as the JSON form.
    """
    import json

    text = text.strip()
    if text.startswith("{"):
        return control_from_json(json.loads(text))
    if text.endswith(")") and "(" in text:
        head, _, rest = text.partition("(")
        head, rest = head.strip(), rest[:-1]
    else:
        head, _, rest = text.partition(":")
    args = [a for a in rest.split(",") if a.strip()]
    if head in ("id", "identity"):
        return identity()
    if head == "one":
        return constant_one()
    if head == "affine":
        return affine(*[to_fraction(a) for a in args])
    if head in ("exp", "exp_base"):
        return exp_base(int(args[0]) if args else 2)
    if head in ("poly", "polynomial"):
        return polynomial([to_fraction(a) for a in args])
    if head == "perp":
        return perp(parse_control(rest))
    if head in ("inv", "inverse_T"):
        return generalized_inverse_T(parse_control(rest))
    raise InputError(f"cannot parse control function {text!r}")


__all__ = [
    "EPS", "ControlFn", "Affine", "Polynomial", "ExpBase", "StepTable", "Composed",
    "InverseT", "Perp", "affine", "identity", "polynomial", "exp_base", "step_table",
    "constant_one", "evaluate", "generalized_inverse_T", "perp", "compose", "compare_at",
    "Domination", "dominates_eventually", "fit_affine_upper_control", "ControlClass",
    "AFF", "POLY", "ALL", "control_from_json", "control_to_json", "parse_control", "INF",
]
