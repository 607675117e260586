"""kappa-equalisers of map pairs and their stability filtration."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import MismatchedSpaces
from .extdist import INF, encode_rational, to_fraction
from .metric_space import MapTable, Space, Subspace, covering_radius


class EqualizerSpace(Subspace):
    """``Eq^kappa(f, g) = {x : d(fx, gx) <= kappa}`` with the restricted source metric."""

    kind = "equalizer"

    def __init__(self, f: MapTable, g: MapTable, kappa):
        _check_pair(f, g)
        self.f, self.g = f, g
        self.kappa = to_fraction(kappa)
        gaps = defect(f, g)
        self.defects = gaps
        pts = [p for p in f.domain if gaps[p] <= self.kappa]
        super().__init__(f.src, points=pts, window=pts, name=f"Eq[{self.kappa}]({f.name},{g.name})")

    def inclusion(self) -> MapTable:
        return MapTable(self, self.f.src, {p: p for p in self.window}, name="iota")

    def to_json(self):
        return {"type": self.kind, "kappa": encode_rational(self.kappa),
                "points": [pt for pt in self.to_points_json()]}

    def to_points_json(self):
        from .metric_space import encode_point

        return [encode_point(p) for p in self.window]


def _check_pair(f: MapTable, g: MapTable):
    if tuple(f.domain) != tuple(g.domain):
        raise MismatchedSpaces("f and g must share the source window")
    if f.dst is not g.dst and f.dst.name != g.dst.name:
        raise MismatchedSpaces("f and g must share the destination")


def defect(f: MapTable, g: MapTable) -> dict:
    """``x -> d(fx, gx)`` on the shared window."""
    d = f.dst.paired(f.image(), g.image())
    return {p: d.entry(0, k) for k, p in enumerate(f.domain)}


def kappa_equalizer(f: MapTable, g: MapTable, kappa) -> EqualizerSpace:
    return EqualizerSpace(f, g, kappa)


def directed_hausdorff(space: Space, outer: Sequence, inner: Sequence):
    """``max_{x in outer} min_{y in inner} d(x, y)`` with the empty-set conventions."""
    if not outer:
        return Fraction(0)
    if not inner:
        return INF
    return covering_radius(space, list(outer), list(inner))[0]


@dataclass
class StabilityTable:
    grid: list
    sizes: dict
    radius: dict  # (kappa, kappa') -> ExtDist
    threshold: Fraction | None

    @property
    def stabilized(self) -> bool:
        return self.threshold is not None

    def sup_radius(self, kappa) -> object:
        vals = [r for (k, kp), r in self.radius.items() if k == kappa]
        return max(vals, key=lambda v: (v is INF, 0 if v is INF else v))

    def rows(self):
        for (k, kp), r in sorted(self.radius.items()):
            yield k, kp, r

    def to_json(self):
        return {
            "grid": [encode_rational(k) for k in self.grid],
            "sizes": {str(k): n for k, n in self.sizes.items()},
            "table": [{"kappa": encode_rational(k), "kappa_prime": encode_rational(kp), "r": encode_rational(r)}
                      for k, kp, r in self.rows()],
            "threshold": None if self.threshold is None else encode_rational(self.threshold),
            "stabilized": self.stabilized,
            "label": "grid-evidence",
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kappa", "kappa_prime", "r"])
        for k, kp, r in self.rows():
            w.writerow([str(k), str(kp), "inf" if r is INF else str(r)])
        return buf.getvalue()


def equalizer_stability(f: MapTable, g: MapTable, kappa_grid: Sequence) -> StabilityTable:
    """Directed Hausdorff radii ``r(kappa, kappa')`` of ``Eq^kappa'`` onto ``Eq^kappa``.

    The threshold is the least grid ``kappa`` from which ``S(kappa) =
    sup_{kappa' >= kappa} r(kappa, kappa')`` is finite and constant, provided
    the constant tail spans at least two grid points.
    """
    _check_pair(f, g)
    grid = sorted(dict.fromkeys(to_fraction(k) for k in kappa_grid))
    if not grid:
        raise ValueError("kappa grid must be nonempty")
    gaps = defect(f, g)
    members = {k: [p for p in f.domain if gaps[p] <= k] for k in grid}
    return stability_table(f.src, grid, members)


def stability_table(space: Space, grid: Sequence, members: dict) -> StabilityTable:
    """Radius table and threshold for a nested family of point sets indexed by ``grid``."""
    grid = sorted(grid)
    radius = {}
    for i, k in enumerate(grid):
        for kp in grid[i:]:
            radius[(k, kp)] = directed_hausdorff(space, members[kp], members[k])
    table = StabilityTable(grid, {k: len(members[k]) for k in grid}, radius, None)
    sups = [table.sup_radius(k) for k in grid]
    j = len(grid) - 1
    if sups[j] is not INF:
        while j > 0 and sups[j - 1] == sups[-1]:
            j -= 1
        if len(grid) - j >= 2:
            table.threshold = grid[j]
    return table


@dataclass
class Factorization:
    kappa_min: Fraction
    grid_kappa: Fraction | None
    corestriction: MapTable

    def to_json(self):
        return {
            "kappa_min": encode_rational(self.kappa_min),
            "grid_kappa": None if self.grid_kappa is None else encode_rational(self.grid_kappa),
            "corestriction": self.corestriction.to_json(),
        }


def factor_through_equalizer(h: MapTable, f: MapTable, g: MapTable, kappa_grid: Sequence = ()) -> Factorization:
    """Least ``kappa`` with ``h`` landing in ``Eq^kappa`` and the corestriction of ``h`` there."""
    _check_pair(f, g)
    gaps = defect(f, g)
    img = h.image()
    missing = [y for y in img if y not in gaps]
    if missing:
        raise MismatchedSpaces(f"h takes value {missing[0]!r} outside the window of f and g")
    kmin = max((gaps[y] for y in img), default=Fraction(0))
    if kmin is INF:
        raise MismatchedSpaces("h meets points where f and g are infinitely far apart")
    eq = EqualizerSpace(f, g, kmin)
    core = MapTable(h.src, eq, dict(h.values), name=f"{h.name}^co", window=h.domain)
    grid = sorted(to_fraction(k) for k in kappa_grid)
    grid_kappa = next((k for k in grid if k >= kmin), None)
    return Factorization(kmin, grid_kappa, core)
