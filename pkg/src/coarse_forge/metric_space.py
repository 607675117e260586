"""Extended-metric oracles, finite windows, maps, and finite-window certificates.

A :class:`Space` answers exact distance queries between any points it can
resolve and carries an ordered finite ``window`` on which every computation
runs. Bulk queries go through :meth:`Space.pairwise`, which returns an exact
:class:`~coarse_forge.extdist.ScaledMatrix`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Callable, Hashable, Iterable, Sequence

import numpy as np

from . import kernels
from .controls import (
    AFF,
    ALL,
    Affine,
    ControlClass,
    ControlFn,
    InverseT,
    fit_affine_upper_control,
)
from .errors import (
    CandidateNotCoarselyEquivalent,
    EmptyInnerWindow,
    EmptyWindow,
    InputError,
    MismatchedSpaces,
    UnknownPoint,
)
from .extdist import (
    INF,
    ExtDist,
    ScaledMatrix,
    common_den,
    elementwise_max,
    encode_rational,
    threshold_table,
    to_fraction,
)

Point = Hashable

DEFAULT_MARGIN = Fraction(1, 10)
TRIANGLE_SAMPLE_CAP = 10**5


def normalize_point(p):
    """JSON arrays become tuples; one-element integer arrays become ints."""
    if isinstance(p, list):
        p = tuple(normalize_point(q) for q in p)
    if isinstance(p, tuple) and len(p) == 1 and isinstance(p[0], int):
        return p[0]
    return p


def encode_point(p):
    if isinstance(p, tuple):
        return [encode_point(q) for q in p]
    return p


def point_label(p) -> str:
    return json.dumps(encode_point(p), separators=(",", ":"))


# -- certificates ----------------------------------------------------------

def _encode_value(v):
    if v is INF or isinstance(v, Fraction):
        return encode_rational(v)
    if isinstance(v, ControlFn):
        return v.to_json()
    if isinstance(v, dict):
        return {str(k): _encode_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_encode_value(x) for x in v]
    return v


@dataclass
class Certificate:
    """Verdict plus exact constants and, on failure, a concrete witness."""

    check: str
    verdict: str  # "pass" | "fail" | "inconclusive"
    constants: dict = field(default_factory=dict)
    witness: dict | None = None
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in ("pass", "fail", "inconclusive"):
            raise ValueError(f"bad verdict {self.verdict!r}")
        if self.verdict == "fail" and not self.witness:
            raise ValueError(f"{self.check}: a failing certificate needs a witness")

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def __bool__(self):
        return self.passed

    def to_json(self) -> dict:
        out = {
            "check": self.check,
            "verdict": self.verdict,
            "constants": _encode_value(self.constants),
        }
        if self.witness is not None:
            out["witness"] = _encode_witness(self.witness)
        if self.notes:
            out["notes"] = _encode_value(self.notes)
        return out


def _encode_witness(w):
    out = {}
    for k, v in w.items():
        if k in ("x", "y", "z", "point", "pair") or k.startswith("point"):
            out[k] = encode_point(v) if not isinstance(v, list) else [encode_point(q) for q in v]
        else:
            out[k] = _encode_value(v)
    return out


# -- spaces ----------------------------------------------------------------

class Space:
    """Base oracle. Subclasses implement ``_contains`` and ``_pairwise``."""

    kind = "space"
    exhaustive_triangle = False

    def __init__(self, window: Iterable[Point], name: str | None = None):
        self.window = tuple(normalize_point(p) for p in window)
        self.name = name or self.kind
        index = {}
        for i, p in enumerate(self.window):
            if p in index:
                raise InputError(f"duplicate window point {p!r}")
            index[p] = i
        self.index = index

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} |W|={len(self.window)}>"

    def __len__(self):
        return len(self.window)

    def contains(self, p) -> bool:
        return self._contains(normalize_point(p))

    def _contains(self, p) -> bool:
        raise NotImplementedError

    def check_points(self, pts):
        for p in pts:
            if not self._contains(p):
                raise UnknownPoint(f"{self.name}: cannot resolve point {p!r}")

    def distance(self, x, y) -> ExtDist:
        x, y = normalize_point(x), normalize_point(y)
        return self.pairwise([x], [y]).entry(0, 0)

    def pairwise(self, A: Sequence, B: Sequence) -> ScaledMatrix:
        A = [normalize_point(p) for p in A]
        B = [normalize_point(p) for p in B]
        self.check_points(A)
        self.check_points(B)
        if not A or not B:
            return ScaledMatrix(np.zeros((len(A), len(B)), dtype=np.int64))
        return self._pairwise(A, B)

    def _pairwise(self, A, B) -> ScaledMatrix:
        raise NotImplementedError

    def paired(self, A: Sequence, B: Sequence) -> ScaledMatrix:
        """Distances ``d(A[k], B[k])`` as a ``1 x n`` table."""
        if len(A) != len(B):
            raise ValueError("paired() needs equal-length sequences")
        uniq_a = list(dict.fromkeys(normalize_point(p) for p in A))
        uniq_b = list(dict.fromkeys(normalize_point(p) for p in B))
        full = self.pairwise(uniq_a, uniq_b)
        ia = {p: i for i, p in enumerate(uniq_a)}
        ib = {p: i for i, p in enumerate(uniq_b)}
        rows = np.array([ia[normalize_point(p)] for p in A], dtype=np.intp)
        cols = np.array([ib[normalize_point(p)] for p in B], dtype=np.intp)
        return ScaledMatrix(full.num[rows, cols][None, :], full.den, full.finite[rows, cols][None, :])

    @cached_property
    def window_matrix(self) -> ScaledMatrix:
        return self.pairwise(self.window, self.window)

    def with_window(self, window) -> "Space":
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


class ExplicitMatrix(Space):
    kind = "explicit_matrix"
    exhaustive_triangle = True

    def __init__(self, points, matrix, window=None, name=None):
        pts = [normalize_point(p) for p in points]
        super().__init__(pts if window is None else window, name)
        self.points = tuple(pts)
        self.pindex = {p: i for i, p in enumerate(self.points)}
        if isinstance(matrix, ScaledMatrix):
            self.matrix = matrix
        else:
            self.matrix = ScaledMatrix.from_entries(matrix)
        n = len(self.points)
        if self.matrix.shape != (n, n):
            raise InputError(f"matrix shape {self.matrix.shape} does not match {n} points")
        m = self.matrix
        if not (np.array_equal(m.num, m.num.T) and np.array_equal(m.finite, m.finite.T)):
            raise InputError("distance matrix must be symmetric")
        if np.any(np.diag(m.num) != 0) or not np.all(np.diag(m.finite)):
            raise InputError("distance matrix must vanish on the diagonal")
        if np.any(m.num < 0):
            raise InputError("distances must be nonnegative")
        self.check_points(self.window)

    def _contains(self, p):
        return p in self.pindex

    def _pairwise(self, A, B):
        return self.matrix.take([self.pindex[p] for p in A], [self.pindex[p] for p in B])

    def with_window(self, window):
        return ExplicitMatrix(self.points, self.matrix, window, self.name)

    def to_json(self):
        n = len(self.points)
        return {
            "type": self.kind,
            "points": [encode_point(p) for p in self.points],
            "matrix": [[encode_rational(self.matrix.entry(i, j)) for j in range(n)] for i in range(n)],
        }


def _isqrt_ceil(s: np.ndarray) -> np.ndarray:
    r = np.floor(np.sqrt(s.astype(np.float64))).astype(np.int64)
    # float sqrt can be off by one near perfect squares; repair exactly
    r = np.where(r * r > s, r - 1, r)
    r = np.where((r + 1) * (r + 1) <= s, r + 1, r)
    return np.where(r * r < s, r + 1, r)


class Lattice(Space):
    """``Z^n`` with L1, Linf, or ceil-rounded L2 distance.

    Points are ints for ``n = 1`` and int tuples otherwise.
    """

    kind = "lattice"
    NORMS = ("L1", "Linf", "L2")

    def __init__(self, dim: int, norm: str = "L1", window=(), name=None):
        if norm in ("L2-rounded", "L2_rounded"):
            norm = "L2"
        if norm not in self.NORMS:
            raise InputError(f"unknown lattice norm {norm!r}")
        if dim < 1:
            raise InputError("lattice dimension must be >= 1")
        self.dim = int(dim)
        self.norm = norm
        super().__init__(window, name)
        self.check_points(self.window)

    def _contains(self, p):
        if self.dim == 1:
            return isinstance(p, int) and not isinstance(p, bool)
        return isinstance(p, tuple) and len(p) == self.dim and all(isinstance(c, int) for c in p)

    def coords(self, pts) -> np.ndarray:
        return np.array(pts, dtype=np.int64).reshape(len(pts), self.dim)

    def _combine(self, diff: np.ndarray) -> np.ndarray:
        if self.norm == "L1":
            return np.abs(diff).sum(axis=-1)
        if self.norm == "Linf":
            return np.abs(diff).max(axis=-1)
        return _isqrt_ceil((diff * diff).sum(axis=-1))

    def _pairwise(self, A, B):
        a, b = self.coords(A), self.coords(B)
        return ScaledMatrix(self._combine(a[:, None, :] - b[None, :, :]))

    def paired(self, A, B):
        a = self.coords([normalize_point(p) for p in A])
        b = self.coords([normalize_point(p) for p in B])
        return ScaledMatrix(self._combine(a - b)[None, :])

    def with_window(self, window):
        return Lattice(self.dim, self.norm, window, self.name)

    def to_json(self):
        return {"type": self.kind, "dim": self.dim, "norm": self.norm}


class GraphMetric(Space):
    """Edge-path metric of a finite simple graph (unit edges)."""

    kind = "graph_metric"

    def __init__(self, vertices, edges, window=None, name=None):
        verts = [normalize_point(v) for v in vertices]
        self.vertices = tuple(verts)
        self.vindex = {v: i for i, v in enumerate(verts)}
        if len(self.vindex) != len(verts):
            raise InputError("duplicate graph vertex")
        n = len(verts)
        adj = np.zeros((n, n), dtype=bool)
        self.edges = []
        for u, v in edges:
            u, v = normalize_point(u), normalize_point(v)
            if u not in self.vindex or v not in self.vindex:
                raise InputError(f"edge ({u!r}, {v!r}) uses an unknown vertex")
            if u == v:
                continue
            i, j = self.vindex[u], self.vindex[v]
            adj[i, j] = adj[j, i] = True
            self.edges.append((u, v))
        self.indptr, self.indices = kernels.build_csr(adj)
        self._rows: dict[int, np.ndarray] = {}
        super().__init__(verts if window is None else window, name)
        self.check_points(self.window)

    def _contains(self, p):
        return p in self.vindex

    def rows(self, sources: Sequence[int]) -> np.ndarray:
        missing = [s for s in dict.fromkeys(sources) if s not in self._rows]
        if missing:
            block = kernels.bfs_rows(self.indptr, self.indices, len(self.vertices), missing)
            for s, row in zip(missing, block):
                row.setflags(write=False)
                self._rows[s] = row
        return np.stack([self._rows[s] for s in sources])

    def _pairwise(self, A, B):
        ra = [self.vindex[p] for p in A]
        cb = np.array([self.vindex[p] for p in B], dtype=np.intp)
        block = self.rows(ra)[:, cb]
        return ScaledMatrix(block, 1, block >= 0)

    def is_connected(self) -> bool:
        return bool(np.all(self.rows([0])[0] >= 0)) if self.vertices else True

    def with_window(self, window):
        return type(self)(self.vertices, self.edges, window, self.name)

    def to_json(self):
        return {
            "type": self.kind,
            "vertices": [encode_point(v) for v in self.vertices],
            "edges": [[encode_point(u), encode_point(v)] for u, v in self.edges],
        }


class TreeMetric(GraphMetric):
    kind = "tree_metric"

    def __init__(self, vertices, edges, window=None, name=None):
        super().__init__(vertices, edges, window, name)
        if len(self.edges) != len(self.vertices) - 1 or not self.is_connected():
            raise InputError("tree_metric needs a connected graph with |E| = |V| - 1")


def path_graph(n: int, name="ray") -> GraphMetric:
    """The ray ``0 - 1 - ... - n`` as a graph metric."""
    return GraphMetric(range(n + 1), [(i, i + 1) for i in range(n)], name=name)


def binary_tree(depth: int, name="tree") -> TreeMetric:
    """Complete binary tree with vertices labelled by heap index."""
    n = 2 ** (depth + 1) - 1
    return TreeMetric(range(n), [((i - 1) // 2, i) for i in range(1, n)], name=name)


class ProductLinf(Space):
    """Finite product with the l-infinity metric; points are tuples."""

    kind = "product_linf"

    def __init__(self, factors: Sequence[Space], window=None, name=None):
        self.factors = tuple(factors)
        if not self.factors:
            raise InputError("product_linf needs at least one factor")
        if window is None:
            import itertools

            window = list(itertools.product(*[f.window for f in self.factors]))
        super().__init__([tuple(p) if isinstance(p, list) else p for p in window], name)
        self.check_points(self.window)

    def normalize(self, p):
        return tuple(normalize_point(c) for c in p)

    def coords(self, p) -> tuple:
        """Coordinates of ``p``; a one-factor point ``(5,)`` is stored as ``5``."""
        if len(self.factors) == 1 and not (isinstance(p, tuple) and len(p) == 1):
            return (p,)
        return p

    def _contains(self, p):
        c = self.coords(p)
        return (
            isinstance(c, tuple)
            and len(c) == len(self.factors)
            and all(f._contains(x) for f, x in zip(self.factors, c))
        )

    def _pairwise(self, A, B):
        A = [self.coords(a) for a in A]
        B = [self.coords(b) for b in B]
        mats = [f.pairwise([a[k] for a in A], [b[k] for b in B]) for k, f in enumerate(self.factors)]
        return elementwise_max(mats)

    def paired(self, A, B):
        A = [self.coords(normalize_point(a)) for a in A]
        B = [self.coords(normalize_point(b)) for b in B]
        mats = [f.paired([a[k] for a in A], [b[k] for b in B]) for k, f in enumerate(self.factors)]
        return elementwise_max(mats)

    def with_window(self, window):
        return ProductLinf(self.factors, window, self.name)

    def to_json(self):
        return {"type": self.kind, "factors": [f.to_json() for f in self.factors]}


class Subspace(Space):
    """Restriction of a parent oracle to points satisfying a predicate."""

    kind = "subspace"

    def __init__(self, parent: Space, predicate: Callable[[Any], bool] | None = None, points=None, window=None, name=None):
        self.parent = parent
        pts = None if points is None else frozenset(normalize_point(p) for p in points)
        self.point_set = pts
        self.predicate = predicate
        if window is None:
            window = [p for p in parent.window if self._member(p)]
        super().__init__(window, name or f"sub({parent.name})")
        self.check_points(self.window)

    def _member(self, p):
        if self.point_set is not None and p not in self.point_set:
            return False
        return self.predicate is None or bool(self.predicate(p))

    def _contains(self, p):
        return self.parent._contains(p) and self._member(p)

    def _pairwise(self, A, B):
        return self.parent._pairwise(A, B)

    def paired(self, A, B):
        return self.parent.paired(A, B)

    def with_window(self, window):
        return Subspace(self.parent, self.predicate, self.point_set, window, self.name)

    def to_json(self):
        out = {"type": self.kind, "parent": self.parent.to_json()}
        if self.point_set is not None:
            out["points"] = sorted((encode_point(p) for p in self.point_set), key=json.dumps)
        return out


def sub_window(space: Space, points: Sequence) -> Space:
    return space.with_window(points)


def z_window(lo: int, hi: int, norm="L1") -> Lattice:
    """``Z`` with window ``[lo, hi]``."""
    return Lattice(1, norm, range(lo, hi + 1), name=f"Z[{lo},{hi}]")


def box_window(dim: int, lo: int, hi: int, norm="Linf") -> Lattice:
    import itertools

    pts = list(itertools.product(range(lo, hi + 1), repeat=dim))
    return Lattice(dim, norm, pts, name=f"Z^{dim}[{lo},{hi}]")


# -- maps --------------------------------------------------------------------

class MapTable:
    """Total assignment ``src.window -> dst`` points."""

    def __init__(self, src: Space, dst: Space, values: dict, name: str = "f", window=None):
        self.src = src
        self.dst = dst
        self.name = name
        vals = {normalize_point(k): normalize_point(v) for k, v in values.items()}
        domain = src.window if window is None else tuple(normalize_point(p) for p in window)
        missing = [p for p in domain if p not in vals]
        if missing:
            raise InputError(f"map {name}: no value for source point {missing[0]!r}")
        for p in domain:
            if not dst._contains(vals[p]):
                raise UnknownPoint(f"map {name}: image {vals[p]!r} of {p!r} not in {dst.name}")
        self.domain = domain
        self.values = {p: vals[p] for p in domain}

    def __call__(self, p):
        return self.values[normalize_point(p)]

    def __repr__(self):
        return f"<MapTable {self.name}: {self.src.name} -> {self.dst.name} |W|={len(self.domain)}>"

    @classmethod
    def from_function(cls, src, dst, fn, name="f", window=None) -> "MapTable":
        domain = src.window if window is None else window
        return cls(src, dst, {p: fn(p) for p in domain}, name, window)

    @classmethod
    def identity(cls, src, dst=None, name="id") -> "MapTable":
        return cls.from_function(src, dst or src, lambda p: p, name)

    def restrict(self, window) -> "MapTable":
        window = [normalize_point(p) for p in window]
        return MapTable(self.src, self.dst, {p: self.values[p] for p in window}, self.name, window)

    def image(self, window=None) -> list:
        dom = self.domain if window is None else window
        return [self.values[normalize_point(p)] for p in dom]

    def compose(self, inner: "MapTable", name=None) -> "MapTable":
        """``self ∘ inner``."""
        return MapTable(inner.src, self.dst, {p: self.values[inner.values[p]] for p in inner.domain},
                        name or f"{self.name}∘{inner.name}", inner.domain)

    def to_json(self):
        return {
            "src": self.src.name,
            "dst": self.dst.name,
            "values": {point_label(k): encode_point(v) for k, v in self.values.items()},
        }


# -- window helpers -----------------------------------------------------------

def _ecc(mat: ScaledMatrix) -> np.ndarray:
    """Eccentricities in numerator units; rows with no finite entry get -1."""
    return np.where(mat.finite, mat.num, -1).max(axis=1)


def window_center(space: Space) -> tuple[int, Fraction]:
    """Index of the first minimum-eccentricity window point and the radius."""
    if not space.window:
        raise EmptyWindow(f"{space.name}: empty window")
    m = space.window_matrix
    ecc = _ecc(m)
    i = int(np.argmin(ecc))
    return i, Fraction(int(ecc[i]), m.den)


def inner_window(space: Space, margin=DEFAULT_MARGIN) -> list:
    """Window points within ``(1 - margin) * radius`` of the window centre."""
    margin = to_fraction(margin)
    if not 0 <= margin < 1:
        raise InputError(f"margin must lie in [0, 1), got {margin}")
    if margin == 0:
        return list(space.window)
    c, radius = window_center(space)
    m = space.window_matrix
    limit = (1 - margin) * radius * m.den
    keep = m.finite[c] & (m.num[c] <= limit)
    pts = [p for p, k in zip(space.window, keep) if k]
    if not pts:
        raise EmptyInnerWindow(f"{space.name}: inner window is empty at margin {margin}")
    return pts


def _upper_pairs(n: int) -> np.ndarray:
    return np.triu(np.ones((n, n), dtype=bool), k=1)


def _samples(x: ScaledMatrix, y: ScaledMatrix, mask: np.ndarray) -> dict:
    """Max ``y`` per distinct ``x`` over masked pairs (finite on both sides)."""
    m = mask & x.finite & y.finite
    xs = x.num[m]
    ys = y.num[m]
    best: dict = {}
    if xs.size == 0:
        return best
    order = np.lexsort((ys, xs))
    xs, ys = xs[order], ys[order]
    last = np.r_[xs[1:] != xs[:-1], True]
    for xv, yv in zip(xs[last], ys[last]):
        best[Fraction(int(xv), x.den)] = Fraction(int(yv), y.den)
    return best


def _first_index(mask: np.ndarray):
    flat = np.flatnonzero(mask)
    if flat.size == 0:
        return None
    return np.unravel_index(int(flat[0]), mask.shape)


def _bound_violations(x: ScaledMatrix, y: ScaledMatrix, mask, func, upper=True):
    """Pairs in ``mask`` with x finite where ``y <= func(x)`` (upper) or ``y >= func(x)`` fails.

    Returns ``(violation_mask, worst_index, excess)`` with the worst pair
    chosen by exact excess, then row-major order.
    """
    xm = mask & x.finite
    vals = np.unique(x.num[xm])
    thr = threshold_table([Fraction(int(v), x.den) for v in vals], func, y.den, upper)
    idx = np.searchsorted(vals, np.where(xm, x.num, vals[0] if vals.size else 0))
    idx = np.clip(idx, 0, max(len(vals) - 1, 0))
    if upper:
        bad = xm & (~y.finite | (y.num > (thr[idx] if vals.size else 0)))
    else:
        bad = xm & y.finite & (y.num < (thr[idx] if vals.size else 0))
    if not bad.any():
        return bad, None, None
    if upper and (bad & ~y.finite).any():
        return bad, _first_index(bad & ~y.finite), INF
    # exact excess per distinct (x value, y value) combination
    combos = {}
    for xi, yv in zip(x.num[bad], y.num[bad]):
        combos.setdefault((int(xi), int(yv)), None)
    best_key, best_ex = None, None
    for xi, yv in combos:
        fx = Fraction(xi, x.den)
        fy = Fraction(yv, y.den)
        ex = fy - func(fx) if upper else func(fx) - fy
        if best_ex is None or ex > best_ex:
            best_key, best_ex = (xi, yv), ex
    worst = _first_index(bad & (x.num == best_key[0]) & (y.num == best_key[1]))
    return bad, worst, best_ex


def _map_tables(f: MapTable, window=None):
    dom = list(f.domain if window is None else window)
    x = f.src.pairwise(dom, dom)
    img = f.image(dom)
    y = f.dst.pairwise(img, img)
    return dom, x, y


# -- certificates of map properties -----------------------------------------

def check_upper_control(f: MapTable, rho: ControlFn, window=None) -> Certificate:
    """``d_Y(fx, fx') <= rho(d_X(x, x'))`` on every window pair with finite ``d_X``."""
    dom, x, y = _map_tables(f, window)
    mask = _upper_pairs(len(dom))
    bad, worst, excess = _bound_violations(x, y, mask, rho.eval, upper=True)
    consts = {"pairs": int(mask.sum())}
    if worst is None:
        return Certificate("upper_control", "pass", consts, notes={"control": rho})
    i, j = worst
    return Certificate(
        "upper_control", "fail", consts,
        witness={"pair": [dom[i], dom[j]], "d_src": x.entry(i, j), "d_dst": y.entry(i, j), "excess": excess},
        notes={"control": rho, "violations": int(bad.sum())},
    )


def check_lower_control(f: MapTable, rho_lower: ControlFn, window=None) -> Certificate:
    """``d_Y(fx, fx') >= rho_lower(d_X(x, x'))``, and ``d_X = INF`` forces ``d_Y = INF``."""
    dom, x, y = _map_tables(f, window)
    mask = _upper_pairs(len(dom))
    conv = mask & ~x.finite & y.finite
    consts = {"pairs": int(mask.sum())}
    if conv.any():
        i, j = _first_index(conv)
        return Certificate(
            "lower_control", "fail", consts,
            witness={"pair": [dom[i], dom[j]], "d_src": INF, "d_dst": y.entry(i, j), "reason": "infinite source distance collapsed"},
            notes={"control": rho_lower},
        )
    bad, worst, deficit = _bound_violations(x, y, mask, rho_lower.eval, upper=False)
    if worst is None:
        return Certificate("lower_control", "pass", consts, notes={"control": rho_lower})
    i, j = worst
    return Certificate(
        "lower_control", "fail", consts,
        witness={"pair": [dom[i], dom[j]], "d_src": x.entry(i, j), "d_dst": y.entry(i, j), "deficit": deficit},
        notes={"control": rho_lower, "violations": int(bad.sum())},
    )


def check_closeness(f: MapTable, g: MapTable, kappa, window=None) -> Certificate:
    """``max_x d(fx, gx) <= kappa``; the exact maximum is reported."""
    kappa = to_fraction(kappa)
    dom = list(f.domain if window is None else window)
    if f.dst is not g.dst and f.dst.name != g.dst.name:
        raise MismatchedSpaces("closeness needs maps into the same space")
    d = f.dst.paired(f.image(dom), g.image(dom))
    if not dom:
        return Certificate("closeness", "pass", {"max": Fraction(0), "kappa": kappa})
    if not d.finite.all():
        k = int(np.flatnonzero(~d.finite[0])[0])
        return Certificate("closeness", "fail", {"max": INF, "kappa": kappa},
                           witness={"point": dom[k], "distance": INF})
    k = int(np.argmax(d.num[0]))
    mx = d.entry(0, k)
    if mx <= kappa:
        return Certificate("closeness", "pass", {"max": mx, "kappa": kappa})
    first = int(np.flatnonzero(d.num[0] > kappa * d.den)[0])
    return Certificate("closeness", "fail", {"max": mx, "kappa": kappa},
                       witness={"point": dom[first], "distance": d.entry(0, first)})


def closeness_bound(f: MapTable, g: MapTable, window=None) -> ExtDist:
    return check_closeness(f, g, 0, window).constants["max"]


def covering_radius(space: Space, targets: Sequence, image: Sequence):
    """Directed Hausdorff radius of ``targets`` onto ``image``: (radius, target, nearest)."""
    image = list(dict.fromkeys(image))
    m = space.pairwise(list(targets), image)
    v, r, c, unbounded = kernels.directed_hausdorff(m.num, m.finite)
    if unbounded:
        return INF, (targets[r] if r >= 0 else None), None
    if r < 0:
        return Fraction(0), None, None
    return Fraction(v, m.den), targets[r], image[c]


def check_coarse_surjectivity(f: MapTable, r, target_window=None, window=None) -> Certificate:
    """Every target point lies within ``r`` of the image."""
    r = to_fraction(r)
    targets = list(f.dst.window if target_window is None else [normalize_point(p) for p in target_window])
    img = f.image(window)
    rad, worst, nearest = covering_radius(f.dst, targets, img)
    consts = {"covering_radius": rad, "r": r}
    if rad <= r:
        return Certificate("coarse_surjectivity", "pass", consts)
    # report the first target (window order) that is not covered within r
    m = f.dst.pairwise(targets, list(dict.fromkeys(img)))
    within = (m.finite & (m.num <= r * m.den)).any(axis=1)
    k = int(np.flatnonzero(~within)[0])
    return Certificate("coarse_surjectivity", "fail", consts,
                       witness={"point": targets[k], "worst_point": worst, "radius": rad})


def certify_quasi_isometry(f: MapTable, margin=DEFAULT_MARGIN, target_window=None) -> Certificate:
    """Fit affine upper and lower data and the covering radius on inner windows.

    Upper control ``(a, b)``: ``d_Y <= a d_X + b``. Lower data ``rho``:
    ``d_X <= rho(d_Y)``, so ``rho^T`` is a lower control; ``rho`` must be
    proper (positive slope). Covering radius measured from the inner target
    window onto the image of the inner source window.
    """
    inner = inner_window(f.src, margin)
    dom, x, y = _map_tables(f, inner)
    mask = _upper_pairs(len(dom)) | np.eye(len(dom), dtype=bool)
    consts: dict = {"margin": to_fraction(margin), "inner_points": len(dom)}

    fin_x_inf_y = mask & x.finite & ~y.finite
    if fin_x_inf_y.any():
        i, j = _first_index(fin_x_inf_y)
        return Certificate("quasi_isometry", "fail", consts,
                           witness={"pair": [dom[i], dom[j]], "reason": "finite source distance mapped to INF"})
    inf_x_fin_y = mask & ~x.finite & y.finite
    if inf_x_fin_y.any():
        i, j = _first_index(inf_x_fin_y)
        return Certificate("quasi_isometry", "fail", consts,
                           witness={"pair": [dom[i], dom[j]], "reason": "INF source distance mapped to a finite one"})

    upper = _fit_from(_samples(x, y, mask))
    lower = _fit_from(_samples(y, x, mask))
    consts["upper"] = upper
    consts["lower_rho"] = lower

    if target_window is None:
        targets = inner_window(f.dst, margin) if f.dst.window else list(dict.fromkeys(f.image(dom)))
    else:
        targets = [normalize_point(p) for p in target_window]
    rad, worst, _ = covering_radius(f.dst, targets, f.image(dom))
    consts["covering_radius"] = rad

    if lower.a == 0:
        # rho is bounded, so rho^T is not a lower control: find a collapsing pair
        i, j = _worst_collapse(x, y, mask)
        return Certificate("quasi_isometry", "fail", consts,
                           witness={"pair": [dom[i], dom[j]], "d_src": x.entry(i, j), "d_dst": y.entry(i, j),
                                    "reason": "lower data not proper (image does not spread)"})
    if rad is INF:
        return Certificate("quasi_isometry", "fail", consts,
                           witness={"point": worst, "reason": "target point at infinite distance from image"})
    # replay both inequalities with the emitted constants
    up = check_upper_control(f, upper, dom)
    lo = check_lower_control(f, InverseT(lower), dom)
    consts["replay_upper"] = up.verdict
    consts["replay_lower"] = lo.verdict
    if not (up.passed and lo.passed):
        bad = up if not up.passed else lo
        return Certificate("quasi_isometry", "fail", consts, witness=bad.witness)
    return Certificate("quasi_isometry", "pass", consts)


def _fit_from(best: dict) -> Affine:
    if not best:
        return Affine(Fraction(0), Fraction(0))
    return fit_affine_upper_control(best.items())


def _secant_fit(best: dict) -> Affine:
    """Slope of the origin secant to the far-end sample, offset from the sample envelope.

    A staircase whose last step is flat drives the far-end fit to slope 0;
    the secant keeps the average growth rate instead.
    """
    if not best or max(best) == 0:
        return _fit_from(best)
    far = max(best)
    a = best[far] / far
    return Affine(a, max(Fraction(0), max(v - a * t for t, v in best.items())))


def _worst_collapse(x, y, mask):
    """Pair with the largest source distance among those with the least image distance."""
    m = mask & x.finite & y.finite & (x.num > 0)
    if not m.any():
        m = mask
    ymin = y.num[m].min()
    cand = m & (y.num == ymin)
    xmax = x.num[cand].max()
    return _first_index(cand & (x.num == xmax))


def coarse_pullback_metric(f: MapTable, name=None) -> ExplicitMatrix:
    """``d'(x, x') = max(1, d_Y(fx, fx'))`` off the diagonal, 0 on it."""
    dom, _, y = _map_tables(f)
    n = len(dom)
    num = np.maximum(y.num, y.den)
    num[np.eye(n, dtype=bool)] = 0
    finite = y.finite.copy()
    finite[np.eye(n, dtype=bool)] = True
    return ExplicitMatrix(dom, ScaledMatrix(num, y.den, finite), name=name or f"pullback({f.name})")


def check_pullback_sandwich(f: MapTable, pulled: Space) -> Certificate:
    """Replays ``d' - 1 <= d_Y(fx, fx') <= d'`` on every pair (INF matches INF)."""
    dom, _, y = _map_tables(f)
    d = pulled.pairwise(dom, dom)
    d, y = common_den(d, y)
    same_inf = d.finite == y.finite
    ok = same_inf & (~d.finite | ((d.num - d.den <= y.num) & (y.num <= d.num)))
    if ok.all():
        return Certificate("pullback_sandwich", "pass", {"pairs": int(ok.size)})
    i, j = _first_index(~ok)
    return Certificate("pullback_sandwich", "fail", {},
                       witness={"pair": [dom[i], dom[j]], "d_pullback": d.entry(i, j), "d_dst": y.entry(i, j)})


# -- metric preorder ---------------------------------------------------------

def _pair_mask(n: int, anchors_idx):
    if anchors_idx is None:
        return _upper_pairs(n)
    mask = np.zeros((n, n), dtype=bool)
    mask[np.asarray(anchors_idx, dtype=np.intp), :] = True
    mask[np.eye(n, dtype=bool)] = False
    return mask


def metric_preorder_check(
    d_hi: Space,
    d_lo: Space,
    cls: ControlClass = AFF,
    fit_fraction=Fraction(1, 2),
    anchors: Sequence | None = None,
    poly_degree: int = 3,
) -> Certificate:
    """Does the identity ``(X, d_hi) -> (X, d_lo)`` admit an upper control in ``cls``?

    The control is fitted on pairs inside the leading ``fit_fraction`` of the
    window (window order) and then replayed on every pair, so an extrapolated
    control that breaks later in the window is reported with a witness.
    ``anchors`` restricts the tested pairs to ``anchor x window``.
    """
    if tuple(d_hi.window) != tuple(d_lo.window):
        raise MismatchedSpaces("metric_preorder_check needs both metrics on one window")
    W = list(d_hi.window)
    n = len(W)
    fit_fraction = to_fraction(fit_fraction)
    if anchors is None:
        rows = W
        anchors_idx = None
    else:
        rows = [normalize_point(a) for a in anchors]
        anchors_idx = list(range(len(rows)))
    hi = d_hi.pairwise(rows, W)
    lo = d_lo.pairwise(rows, W)
    if anchors is None:
        mask = _upper_pairs(n)
    else:
        colpos = np.array([d_hi.index[a] for a in rows])
        mask = np.ones((len(rows), n), dtype=bool)
        mask[np.arange(len(rows)), colpos] = False
    cut = max(1, math.ceil(fit_fraction * n))
    in_fit = np.zeros(n, dtype=bool)
    in_fit[:cut] = True
    row_in_fit = in_fit if anchors is None else np.array([d_hi.index[a] < cut for a in rows])
    fit_mask = mask & row_in_fit[:, None] & in_fit[None, :]
    consts: dict = {"class": cls.kind, "fit_points": cut, "pairs": int(mask.sum())}

    bad_inf = mask & hi.finite & ~lo.finite
    if bad_inf.any():
        i, j = _first_index(bad_inf)
        return Certificate("metric_preorder", "fail", consts,
                           witness={"pair": [rows[i], W[j]], "d_hi": hi.entry(i, j), "d_lo": INF,
                                    "reason": "finite d_hi with infinite d_lo"})
    if cls.kind == "All":
        return Certificate("metric_preorder", "pass", consts, notes={"evidence": "finite-compatible"})

    degrees = [1] if cls.kind == "Aff" else list(range(1, poly_degree + 1))
    last = None
    for k in degrees:
        samples = _samples(hi, lo, fit_mask)
        reduced = {t**k: v for t, v in samples.items()} if k > 1 else samples
        fitted = _fit_from(reduced)
        first = None
        for cand in (fitted, _secant_fit(reduced)):
            control = cand if k == 1 else _monomial_affine(cand, k)
            bad, worst, excess = _bound_violations(hi, lo, mask, control.eval, upper=True)
            if worst is None:
                return Certificate("metric_preorder", "pass", dict(consts, degree=k, a=cand.a, b=cand.b),
                                   notes={"control": control, "fit": "far_end" if cand is fitted else "secant"})
            if first is None:
                first = (control, bad, worst, excess)
        control, bad, worst, excess = first
        consts_k = dict(consts, degree=k, a=fitted.a, b=fitted.b)
        i, j = worst
        last = Certificate(
            "metric_preorder", "fail", consts_k,
            witness={"pair": [rows[i], W[j]], "d_hi": hi.entry(i, j), "d_lo": lo.entry(i, j), "excess": excess},
            notes={"control": control, "violations": int(bad.sum())},
        )
    return last


def _monomial_affine(fitted: Affine, k: int) -> ControlFn:
    from .controls import Polynomial

    coeffs = [fitted.b] + [Fraction(0)] * (k - 1) + [fitted.a]
    return Polynomial(tuple(coeffs))


def coarsely_equivalent_window(d: Space, e: Space) -> bool:
    return metric_preorder_check(d, e, ALL).passed and metric_preorder_check(e, d, ALL).passed


def extremality_report(d: Space, sigma, candidates: Sequence[Space], cls: ControlClass = AFF, **kw) -> dict:
    """Check ``candidate ≺ d_sigma`` for each coarsely equivalent candidate metric."""
    from .rips import rips_space

    d_sigma = rips_space(d, sigma)
    rows = []
    for cand in candidates:
        if not coarsely_equivalent_window(d, cand):
            raise CandidateNotCoarselyEquivalent(f"{cand.name} is not window-coarsely-equivalent to {d.name}")
        cert = metric_preorder_check(d_sigma, cand, cls, **kw)
        rows.append({"candidate": cand.name, "certificate": cert.to_json(), "verdict": cert.verdict})
    verdict = "pass" if all(r["verdict"] == "pass" for r in rows) else "fail"
    return {"space": d.name, "sigma": encode_rational(to_fraction(sigma)), "class": cls.kind,
            "maximal_on_window": verdict == "pass", "verdict": verdict, "candidates": rows}


# -- metric axioms ------------------------------------------------------------

def validate_metric(space: Space, seed: int = 0, sample_cap: int = TRIANGLE_SAMPLE_CAP) -> Certificate:
    """Symmetry, zero diagonal, and the triangle inequality on the window.

    Exhaustive for explicit matrices; otherwise ``min(|W|^3, sample_cap)``
    triples drawn from ``numpy.random.default_rng(seed)``.
    """
    W = list(space.window)
    n = len(W)
    m = space.window_matrix
    consts = {"points": n, "seed": seed}
    if n == 0:
        return Certificate("metric_axioms", "pass", dict(consts, triples=0))
    if not (np.array_equal(m.num, m.num.T) and np.array_equal(m.finite, m.finite.T)):
        i, j = _first_index((m.num != m.num.T) | (m.finite != m.finite.T))
        return Certificate("metric_axioms", "fail", consts, witness={"pair": [W[i], W[j]], "reason": "asymmetric"})
    if np.any(np.diag(m.num) != 0):
        i = int(np.flatnonzero(np.diag(m.num) != 0)[0])
        return Certificate("metric_axioms", "fail", consts, witness={"point": W[i], "reason": "nonzero diagonal"})
    total = n**3
    if space.exhaustive_triangle or total <= sample_cap:
        a, b, c = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
        a, b, c = a.ravel(), b.ravel(), c.ravel()
        mode = "exhaustive"
    else:
        rng = np.random.default_rng(seed)
        a, b, c = rng.integers(0, n, size=(3, sample_cap))
        mode = "sampled"
    lhs_f = m.finite[a, c]
    rhs_f = m.finite[a, b] & m.finite[b, c]
    viol = (rhs_f & ~lhs_f) | (rhs_f & lhs_f & (m.num[a, c] > m.num[a, b] + m.num[b, c]))
    consts.update(triples=int(a.size), mode=mode)
    if viol.any():
        k = int(np.flatnonzero(viol)[0])
        return Certificate("metric_axioms", "fail", consts,
                           witness={"x": W[a[k]], "y": W[b[k]], "z": W[c[k]], "reason": "triangle inequality"})
    return Certificate("metric_axioms", "pass", consts)
