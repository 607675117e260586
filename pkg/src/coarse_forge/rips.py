"""Rips graphs, weighted Rips graphs, and the checks built on their metrics.

Both graph types are :class:`~coarse_forge.metric_space.Space` subclasses
over the base window, so every metric-space check applies to them directly.
Distance rows are computed on demand and published once per source.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import kernels
from .controls import ControlFn, InverseT, Perp, fit_affine_upper_control
from .errors import (
    HypothesisUnverified,
    InfiniteDistance,
    NotConnected,
    ScaleOverflow,
    UnknownPoint,
    WeightBelowOne,
)
from .extdist import INF, SAFE_LIMIT, ScaledMatrix, encode_rational, ext_add, threshold_table, to_ext, to_fraction
from .metric_space import (
    DEFAULT_MARGIN,
    Certificate,
    Space,
    _bound_violations,
    _first_index,
    _samples,
    _upper_pairs,
    inner_window,
    normalize_point,
)

DENSITY_WARNING_EDGES = 10**7


def _scale_or_inf(sigma):
    return to_ext(sigma)


class RipsGraph(Space):
    """``Rips_sigma`` of the base window: ``x ~ y`` iff ``x != y`` and ``d(x, y) <= sigma``."""

    kind = "rips"

    def __init__(self, base: Space, sigma):
        self.base = base
        self.sigma = _scale_or_inf(sigma)
        if self.sigma is not INF and self.sigma < 0:
            raise ValueError("Rips scale must be nonnegative")
        super().__init__(base.window, name=f"Rips[{encode_sigma(self.sigma)}]({base.name})")
        m = base.window_matrix
        n = len(self.window)
        if self.sigma is INF:
            adj = m.finite.copy()
        else:
            adj = m.finite & (m.num <= math.floor(self.sigma * m.den))
        adj[np.eye(n, dtype=bool)] = False
        self.adjacency = adj
        self.indptr, self.indices = kernels.build_csr(adj)
        self._rows: dict[int, np.ndarray] = {}

    def _contains(self, p):
        return p in self.index

    def adjacent(self, x, y) -> bool:
        return bool(self.adjacency[self.index[normalize_point(x)], self.index[normalize_point(y)]])

    def neighbours(self, x) -> list:
        i = self.index[normalize_point(x)]
        return [self.window[j] for j in np.flatnonzero(self.adjacency[i])]

    @property
    def edge_count(self) -> int:
        return int(self.adjacency.sum()) // 2

    def rows(self, sources: Sequence[int]) -> np.ndarray:
        missing = [s for s in dict.fromkeys(sources) if s not in self._rows]
        if missing:
            block = kernels.bfs_rows(self.indptr, self.indices, len(self.window), missing)
            for s, row in zip(missing, block):
                row.setflags(write=False)
                self._rows[s] = row
        return np.stack([self._rows[s] for s in sources])

    def _pairwise(self, A, B):
        block = self.rows([self.index[p] for p in A])[:, [self.index[p] for p in B]]
        return ScaledMatrix(block, 1, block >= 0)

    def components(self) -> list[list]:
        seen = np.zeros(len(self.window), dtype=bool)
        out = []
        for i in range(len(self.window)):
            if not seen[i]:
                comp = np.flatnonzero(self.rows([i])[0] >= 0)
                seen[comp] = True
                out.append([self.window[j] for j in comp])
        return out

    def with_window(self, window):
        return build_rips(self.base.with_window(window), self.sigma)

    def to_json(self):
        return {"type": "rips", "parent": self.base.to_json(), "sigma": encode_sigma(self.sigma)}

    def summary(self) -> dict:
        return {
            "space": self.base.name,
            "sigma": encode_sigma(self.sigma),
            "points": len(self.window),
            "edges": self.edge_count,
            "components": len(self.components()),
        }


def encode_sigma(sigma):
    return "inf" if sigma is INF else str(to_fraction(sigma))


def build_rips(s: Space, sigma) -> RipsGraph:
    """Rips graph at scale ``sigma`` on the window of ``s`` (cached per space and scale)."""
    if not s.window:
        from .errors import EmptyWindow

        raise EmptyWindow(f"{s.name}: empty window")
    key = _scale_or_inf(sigma)
    cache = s.__dict__.setdefault("_rips_cache", {})
    if key not in cache:
        cache[key] = RipsGraph(s, key)
    return cache[key]


rips_space = build_rips


def rips_distance(g: RipsGraph, x, y):
    x, y = normalize_point(x), normalize_point(y)
    for p in (x, y):
        if p not in g.index:
            raise UnknownPoint(f"{p!r} is not in the window of {g.base.name}")
    return g.distance(x, y)


# -- (sigma, rho)-paths -----------------------------------------------------

def _inverse_values(rho: ControlFn, n: int) -> list[Fraction]:
    inv = InverseT(rho)
    return [inv.eval(m) for m in range(n)]


def verify_sigma_rho_path(s: Space, path: Sequence, sigma, rho: ControlFn, _inv=None) -> Certificate:
    """``rho^T(|k-j|) <= d(x_j, x_k) <= sigma |k-j|`` for all index pairs."""
    path = [normalize_point(p) for p in path]
    if not path:
        raise ValueError("path must be nonempty")
    sigma = to_fraction(sigma)
    n = len(path)
    d = s.pairwise(path, path)
    gaps = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    inv = _inv if _inv is not None and len(_inv) >= n else _inverse_values(rho, n)
    up_thr = np.array([math.floor(sigma * k * d.den) for k in range(n)], dtype=np.int64)
    lo_thr = threshold_table(inv[:n], lambda v: v, d.den, upper=False)
    bad_up = ~d.finite | (d.num > up_thr[gaps])
    bad_lo = d.finite & (d.num < lo_thr[gaps])
    mask = _upper_pairs(n)
    bad = mask & (bad_up | bad_lo)
    consts = {"sigma": sigma, "length": n}
    if not bad.any():
        return Certificate("sigma_rho_path", "pass", consts, notes={"rho": rho})
    j, k = _first_index(bad)
    which = "upper" if bad_up[j, k] else "lower"
    return Certificate(
        "sigma_rho_path", "fail", consts,
        witness={"j": int(j), "k": int(k), "bound": which, "d": d.entry(j, k),
                 "upper": sigma * (k - j), "lower": inv[k - j]},
        notes={"rho": rho},
    )


def _greedy_geodesic(g: RipsGraph, i: int, t: int) -> list[int] | None:
    """Rips geodesic from window index ``i`` to ``t``.

    Each step moves to a neighbour one hop closer to the target, taking the
    largest base-metric jump and the first such point in window order.
    """
    to_t = g.rows([t])[0]
    if to_t[i] < 0:
        return None
    bm = g.base.window_matrix
    path = [i]
    cur = i
    while cur != t:
        cand = g.adjacency[cur] & (to_t == to_t[cur] - 1)
        idx = np.flatnonzero(cand)
        jumps = bm.num[cur, idx]
        cur = int(idx[int(np.argmax(jumps))])
        path.append(cur)
    return path


def find_sigma_rho_path(s: Space, x, y, sigma, rho: ControlFn, _inv=None):
    """A verified ``(sigma, rho)``-path from ``x`` to ``y``, or ``None`` if none is found."""
    x, y = normalize_point(x), normalize_point(y)
    if s.distance(x, y) is INF:
        raise InfiniteDistance(f"d({x!r}, {y!r}) is infinite")
    if x == y:
        return [x]
    g = build_rips(s, sigma)
    idx = _greedy_geodesic(g, g.index[x], g.index[y])
    if idx is None:
        return None
    path = [g.window[k] for k in idx]
    if not verify_sigma_rho_path(s, path, sigma, rho, _inv).passed:
        return None
    return path


def cgeodesic_certificate(s: Space, sigma, rho: ControlFn, margin=DEFAULT_MARGIN) -> Certificate:
    """Path criterion and the equivalent bound ``rho^T(d_sigma) <= d`` on inner pairs."""
    inner = inner_window(s, margin)
    g = build_rips(s, sigma)
    d = s.pairwise(inner, inner)
    ds = g.pairwise(inner, inner)
    n = len(inner)
    mask = _upper_pairs(n) & d.finite
    consts = {"sigma": to_fraction(sigma), "margin": to_fraction(margin), "inner_points": n}

    # bound criterion: d_sigma finite, d <= sigma d_sigma, rho^T(d_sigma) >= ... <= d
    reach = int(ds.num[mask & ds.finite].max(initial=0)) + 1
    inv = _inverse_values(rho, max(reach, n) + 1)
    bound_bad = mask & ~ds.finite
    lo_thr = threshold_table(inv, lambda v: v, d.den, upper=False)
    hops = np.where(ds.finite, ds.num, 0)
    bound_bad |= mask & ds.finite & (d.num < lo_thr[hops])
    bound_ok = not bound_bad.any()

    # path criterion, pair by pair
    path_witness = None
    for i, j in zip(*np.nonzero(mask)):
        path = find_sigma_rho_path(s, inner[i], inner[j], sigma, rho, inv)
        if path is None:
            path_witness = {"pair": [inner[i], inner[j]], "d": d.entry(i, j), "d_sigma": ds.entry(i, j)}
            break
    path_ok = path_witness is None
    consts["path_criterion"] = "pass" if path_ok else "fail"
    consts["bound_criterion"] = "pass" if bound_ok else "fail"
    if path_ok and bound_ok:
        return Certificate("cgeodesic", "pass", consts, notes={"rho": rho})
    if path_ok != bound_ok:
        w = path_witness
        if w is None:
            i, j = _first_index(bound_bad)
            w = {"pair": [inner[i], inner[j]], "d": d.entry(i, j), "d_sigma": ds.entry(i, j)}
        return Certificate("cgeodesic", "inconclusive", consts, witness=w,
                           notes={"rho": rho, "reason": "path and bound criteria disagree"})
    if path_witness is None:
        i, j = _first_index(bound_bad)
        path_witness = {"pair": [inner[i], inner[j]], "d": d.entry(i, j), "d_sigma": ds.entry(i, j)}
    return Certificate("cgeodesic", "fail", consts, witness=path_witness, notes={"rho": rho})


# -- filtration sweep ---------------------------------------------------------

@dataclass
class StabilityReport:
    space: str
    grid: list
    margin: Fraction
    pairs: list  # dicts: sigma, tau, a, b
    evidence_at: Fraction | None

    @property
    def evidence(self) -> bool:
        return self.evidence_at is not None

    def to_json(self):
        return {
            "space": self.space,
            "grid": [encode_rational(g) for g in self.grid],
            "margin": encode_rational(self.margin),
            "pairs": [
                {"sigma": encode_rational(p["sigma"]), "tau": encode_rational(p["tau"]),
                 "a": encode_rational(p["a"]), "b": encode_rational(p["b"]), "consecutive": p["consecutive"]}
                for p in self.pairs
            ],
            "evidence": self.evidence,
            "evidence_at": None if self.evidence_at is None else encode_rational(self.evidence_at),
            "label": "window-evidence",
        }


def filtration_sweep(s: Space, sigma_grid: Sequence, margin=DEFAULT_MARGIN) -> StabilityReport:
    """Fit ``d_sigma <= a d_tau + b`` on inner pairs for every ``sigma <= tau`` in the grid.

    Evidence is flagged at the smallest ``sigma_0`` from which all consecutive
    grid steps share one fitted ``(a, b)``, provided that tail has at least
    two steps or the shared constants are ``(1, 0)`` (the inclusions are
    isometries on the window).
    """
    grid = sorted(dict.fromkeys(to_fraction(g) for g in sigma_grid))
    if not grid:
        raise ValueError("sigma grid must be nonempty")
    inner = inner_window(s, margin)
    n = len(inner)
    mask = _upper_pairs(n) | np.eye(n, dtype=bool)
    tables = {g: build_rips(s, g).pairwise(inner, inner) for g in grid}
    pairs = []
    consecutive = []
    for a_i, sig in enumerate(grid):
        for tau in grid[a_i + 1:]:
            best = _samples(tables[tau], tables[sig], mask)
            fit = fit_affine_upper_control(best.items()) if best else fit_affine_upper_control([(0, 0)])
            row = {"sigma": sig, "tau": tau, "a": fit.a, "b": fit.b,
                   "consecutive": tau == grid[a_i + 1]}
            pairs.append(row)
            if row["consecutive"]:
                consecutive.append(row)
    evidence_at = None
    if consecutive:
        last = (consecutive[-1]["a"], consecutive[-1]["b"])
        k = len(consecutive) - 1
        while k > 0 and (consecutive[k - 1]["a"], consecutive[k - 1]["b"]) == last:
            k -= 1
        tail = len(consecutive) - k
        if tail >= 2 or last == (1, 0):
            evidence_at = consecutive[k]["sigma"]
    return StabilityReport(s.name, grid, to_fraction(margin), pairs, evidence_at)


# -- weighted Rips graphs ------------------------------------------------------

class WeightedRipsGraph(Space):
    """``Rips^theta_sigma``: base-window Rips edges weighted by ``theta(d)``; Dijkstra metric."""

    kind = "weighted_rips"

    def __init__(self, base: Space, theta: ControlFn, sigma=INF):
        self.base = base
        self.theta = theta
        self.sigma = _scale_or_inf(sigma)
        super().__init__(base.window, name=f"Rips^w[{encode_sigma(self.sigma)}]({base.name})")
        m = base.window_matrix
        n = len(self.window)
        edges = m.finite.copy() if self.sigma is INF else m.finite & (m.num <= math.floor(self.sigma * m.den))
        edges[np.eye(n, dtype=bool)] = False
        n_edges = int(edges.sum()) // 2
        if n_edges > DENSITY_WARNING_EDGES:
            warnings.warn(f"weighted Rips graph on {n} points has {n_edges} edges", RuntimeWarning, stacklevel=2)
        self.edges = edges
        self.n_edges = n_edges

        vals = np.unique(m.num[edges])
        weights = []
        for v in vals:
            w = theta.eval(Fraction(int(v), m.den))
            if w < 1:
                raise WeightBelowOne(f"theta({Fraction(int(v), m.den)}) = {w} < 1")
            weights.append(w)
        self.weight_of = {Fraction(int(v), m.den): w for v, w in zip(vals, weights)}
        den = 1
        for w in weights:
            den = math.lcm(den, w.denominator)
        if den > SAFE_LIMIT:
            raise ScaleOverflow("weight denominators too large for an exact int64 table")
        self.den = den
        # clamp: any path through a clamped edge is at least `cap`, so results below it are exact
        self.cap = max(1, SAFE_LIMIT // max(n, 1))
        scaled = [min(int(w * den), self.cap) for w in weights]
        self.clamped = any(int(w * den) > self.cap for w in weights)
        wtab = np.array(scaled, dtype=np.int64) if scaled else np.zeros(0, dtype=np.int64)
        pos = np.searchsorted(vals, np.where(edges, m.num, vals[0] if vals.size else 0))
        self.weights = np.where(edges, wtab[np.clip(pos, 0, max(len(vals) - 1, 0))] if vals.size else 0, 0)
        self._rows: dict[int, list | np.ndarray] = {}
        self._exact_rows: dict[int, list] = {}

    def _contains(self, p):
        return p in self.index

    def edge_weight(self, x, y):
        i, j = self.index[normalize_point(x)], self.index[normalize_point(y)]
        if not self.edges[i, j]:
            return None
        dm = self.base.window_matrix
        return self.weight_of[Fraction(int(dm.num[i, j]), dm.den)]

    def _exact_row(self, s: int) -> list:
        """Heap-based Dijkstra with Python integers (used when clamping bites)."""
        n = len(self.window)
        dm = self.base.window_matrix
        full = {}
        for k, w in self.weight_of.items():
            full[k] = int(w * self.den)
        dist = [None] * n
        dist[s] = 0
        heap = [(0, s)]
        done = [False] * n
        while heap:
            du, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            for v in np.flatnonzero(self.edges[u]):
                v = int(v)
                if done[v]:
                    continue
                alt = du + full[Fraction(int(dm.num[u, v]), dm.den)]
                if dist[v] is None or alt < dist[v]:
                    dist[v] = alt
                    heapq.heappush(heap, (alt, v))
        return dist

    def rows(self, sources: Sequence[int]) -> np.ndarray:
        """Scaled numerators; entries ``>= cap`` are only trustworthy via :meth:`exact_entry`."""
        missing = [s for s in dict.fromkeys(sources) if s not in self._rows]
        if missing:
            block = kernels.dijkstra_rows(self.weights, self.edges, missing)
            for s, row in zip(missing, block):
                row.setflags(write=False)
                self._rows[s] = row
        return np.stack([self._rows[s] for s in sources])

    def _pairwise(self, A, B):
        ra = [self.index[p] for p in A]
        cb = [self.index[p] for p in B]
        block = self.rows(ra)[:, cb]
        if self.clamped and (block >= self.cap).any():
            block = block.copy()
            for r, s in enumerate(ra):
                if (block[r] >= self.cap).any():
                    if s not in self._exact_rows:
                        self._exact_rows[s] = self._exact_row(s)
                    ex = self._exact_rows[s]
                    for c, t in enumerate(cb):
                        if block[r, c] >= self.cap:
                            if ex[t] > SAFE_LIMIT:
                                raise ScaleOverflow("weighted distance exceeds the exact int64 range")
                            block[r, c] = ex[t]
        return ScaledMatrix(block, self.den, block >= 0)

    def with_window(self, window):
        return WeightedRipsGraph(self.base.with_window(window), self.theta, self.sigma)

    def to_json(self):
        return {"type": "weighted_rips", "parent": self.base.to_json(), "theta": self.theta.to_json(),
                "sigma": encode_sigma(self.sigma)}

    def summary(self) -> dict:
        return {"space": self.base.name, "sigma": encode_sigma(self.sigma), "points": len(self.window),
                "edges": self.n_edges, "theta": self.theta.to_json()}


def build_weighted_rips(s: Space, theta: ControlFn, sigma=INF) -> WeightedRipsGraph:
    key = (theta, _scale_or_inf(sigma))
    cache = s.__dict__.setdefault("_wrips_cache", {})
    try:
        hit = cache.get(key)
    except TypeError:
        hit, key = None, None
    if hit is None:
        hit = WeightedRipsGraph(s, theta, sigma)
        if key is not None:
            cache[key] = hit
    return hit


def weight_control_check(s: Space, theta: ControlFn, margin=DEFAULT_MARGIN, graph: WeightedRipsGraph | None = None) -> Certificate:
    """``d^theta_inf(x, y) <= theta(d(x, y))`` on inner pairs."""
    g = graph if graph is not None else build_weighted_rips(s, theta, INF)
    inner = inner_window(s, margin)
    d = s.pairwise(inner, inner)
    w = g.pairwise(inner, inner)
    mask = _upper_pairs(len(inner))
    bad, worst, excess = _bound_violations(d, w, mask, theta.eval, upper=True)
    consts = {"inner_points": len(inner)}
    if worst is None:
        return Certificate("weight_control", "pass", consts, notes={"theta": theta})
    i, j = worst
    return Certificate("weight_control", "fail", consts,
                       witness={"pair": [inner[i], inner[j]], "d": d.entry(i, j), "d_weighted": w.entry(i, j),
                                "excess": excess},
                       notes={"theta": theta})


def surplus_weight_check(s: Space, theta: ControlFn, rho: ControlFn, sigma, margin=DEFAULT_MARGIN) -> Certificate:
    """If ``rho`` controls ``id: (X, d) -> (X, d^theta_inf)`` and ``rho(t) + 1 <= theta(t)`` for
    ``t >= sigma``, then ``d^theta_sigma == d^theta_inf``; verified pair by pair."""
    sigma = to_fraction(sigma)
    inner = inner_window(s, margin)
    full = build_weighted_rips(s, theta, INF)
    part = build_weighted_rips(s, theta, sigma)
    m = s.window_matrix
    for v in np.unique(m.num[m.finite]):
        t = Fraction(int(v), m.den)
        if t >= sigma and not theta.at_least(t, rho.eval(t) + 1):
            exc = HypothesisUnverified(f"rho(t) + 1 <= theta(t) fails at t = {t}")
            exc.witness = {"t": t, "rho_plus_one": rho.eval(t) + 1}
            raise exc
    d = s.pairwise(inner, inner)
    w_full = full.pairwise(inner, inner)
    mask = _upper_pairs(len(inner))
    bad, worst, _ = _bound_violations(d, w_full, mask, rho.eval, upper=True)
    if worst is not None:
        i, j = worst
        exc = HypothesisUnverified(f"rho is not an upper control for the weighted metric at {inner[i]!r}, {inner[j]!r}")
        exc.witness = {"pair": [inner[i], inner[j]]}
        raise exc
    w_part = part.pairwise(inner, inner)
    same = (w_part.finite == w_full.finite) & (~w_full.finite | (w_part.num == w_full.num))
    consts = {"sigma": sigma, "inner_points": len(inner), "pairs": int(mask.sum())}
    if same.all():
        return Certificate("surplus_weight", "pass", consts, notes={"theta": theta, "rho": rho})
    i, j = _first_index(~same)
    return Certificate("surplus_weight", "fail", consts,
                       witness={"pair": [inner[i], inner[j]], "d_sigma": w_part.entry(i, j), "d_inf": w_full.entry(i, j)},
                       notes={"theta": theta, "rho": rho})


# -- shortcut metric -------------------------------------------------------------

@dataclass(frozen=True)
class AtLeastOne(ControlFn):
    """``max(1, f(t))``: the clamp that keeps weights in ``[1, inf)``."""

    of: ControlFn
    form = "at_least_one"

    def eval(self, t):
        return max(Fraction(1), self.of.eval(t))

    def growth(self):
        return self.of.growth()

    def to_json(self):
        return {"form": "at_least_one", "of": self.of.to_json()}


def shortcut_metric(s: Space, theta: ControlFn, check_sources: int = 4, seed: int = 0) -> WeightedRipsGraph:
    """``d' = d^{w}_inf`` with ``w = max(1, theta^perp)``; the window must be connected.

    ``theta(d'(x, y)) <= d(x, y)`` is replayed on rows from a few seeded
    sources wherever ``d' > 1``; the result is kept on ``.verification``.
    """
    m = s.window_matrix
    if not m.finite.all():
        raise NotConnected(f"{s.name}: window is not connected")
    g = WeightedRipsGraph(s, AtLeastOne(Perp(theta)), INF)
    g.name = f"shortcut({s.name})"
    rng = np.random.default_rng(seed)
    n = len(s.window)
    srcs = sorted({0, *rng.integers(0, n, size=min(check_sources, n)).tolist()})
    rows = [s.window[i] for i in srcs]
    dp = g.pairwise(rows, s.window)
    dd = s.pairwise(rows, s.window)
    witness = None
    for r in range(len(rows)):
        for c in range(n):
            v = dp.entry(r, c)
            if v > 1 and not theta.at_most(v, dd.entry(r, c)):
                witness = {"pair": [rows[r], s.window[c]], "d_short": v, "d": dd.entry(r, c)}
                break
        if witness:
            break
    consts = {"sources": len(rows), "seed": seed}
    g.verification = (Certificate("shortcut_inequality", "pass", consts) if witness is None
                      else Certificate("shortcut_inequality", "fail", consts, witness=witness))
    return g


def shortcut_closed_form(theta: ControlFn, gap: int) -> Fraction:
    """Shortcut distance on a path graph when one edge is optimal: ``max(1, theta^perp(gap))``."""
    if gap == 0:
        return Fraction(0)
    return max(Fraction(1), Perp(theta).eval(Fraction(gap)))
