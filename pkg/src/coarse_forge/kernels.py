"""Hot graph kernels: multi-source BFS, dense Dijkstra, directed Hausdorff.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy
version. The numba path is used unless ``COARSE_FORGE_NO_NUMBA=1`` is set
or numba cannot be imported. Both paths work on exact int64 data and must
return identical arrays; ``tests/test_kernels.py`` and
``benchmarks/bench_kernels.py`` hold them to that.

Unreachable entries are returned as ``-1``; callers turn them into ``INF``.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("COARSE_FORGE_NO_NUMBA", "").strip() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("numba disabled by COARSE_FORGE_NO_NUMBA")
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"

if HAVE_NUMBA and os.environ.get("COARSE_FORGE_THREADS"):
    try:
        numba.set_num_threads(max(1, min(int(os.environ["COARSE_FORGE_THREADS"]), numba.config.NUMBA_NUM_THREADS)))
    except ValueError:
        pass


def build_csr(adjacency: np.ndarray):
    """CSR arrays from a dense boolean adjacency matrix (row order preserved)."""
    rows, cols = np.nonzero(adjacency)
    n = adjacency.shape[0]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, cols.astype(np.int64)


# -- numpy reference path -------------------------------------------------

def _bfs_rows_np(indptr, indices, n, sources):
    """Level-synchronous BFS for all sources at once (one Python step per level)."""
    k = len(sources)
    out = np.full((k, n), -1, dtype=np.int64)
    if k == 0:
        return out
    rows = np.arange(k, dtype=np.int64)
    verts = np.asarray(sources, dtype=np.int64)
    out[rows, verts] = 0
    level = 0
    while verts.size:
        level += 1
        starts = indptr[verts]
        counts = indptr[verts + 1] - starts
        total = int(counts.sum())
        if total == 0:
            break
        offsets = np.repeat(starts - np.cumsum(counts) + counts, counts) + np.arange(total)
        r = np.repeat(rows, counts)
        v = indices[offsets]
        fresh = out[r, v] < 0
        # dedupe (row, vertex) pairs reached twice in this level
        key = np.unique(r[fresh] * n + v[fresh])
        rows, verts = key // n, key % n
        out[rows, verts] = level
    return out


def _dijkstra_rows_np(weights, edges, sources):
    n = weights.shape[0]
    big = np.iinfo(np.int64).max
    out = np.full((len(sources), n), -1, dtype=np.int64)
    wmask = np.where(edges, weights, big)
    for r, s in enumerate(sources):
        dist = np.full(n, big, dtype=np.int64)
        done = np.zeros(n, dtype=bool)
        dist[s] = 0
        for _ in range(n):
            cand = np.where(done, big, dist)
            u = int(np.argmin(cand))
            if cand[u] == big:
                break
            done[u] = True
            row = wmask[u]
            ok = (row != big) & ~done
            alt = dist[u] + np.where(ok, row, 0)
            better = ok & (alt < dist)
            dist[better] = alt[better]
        dist[dist == big] = -1
        out[r] = dist
    return out


def _hausdorff_np(num, finite):
    """max over rows of min over finite columns; returns (value, row, col, unbounded)."""
    if num.shape[0] == 0:
        return 0, -1, -1, False
    if num.shape[1] == 0:
        return 0, 0, -1, True
    big = np.iinfo(np.int64).max
    masked = np.where(finite, num, big)
    cols = np.argmin(masked, axis=1)
    mins = masked[np.arange(num.shape[0]), cols]
    r = int(np.argmax(mins))
    if mins[r] == big:
        return 0, r, -1, True
    return int(mins[r]), r, int(cols[r]), False


# -- numba path -----------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _bfs_rows_nb(indptr, indices, n, sources):
        out = np.full((sources.shape[0], n), -1, dtype=np.int64)
        queue = np.empty(n, dtype=np.int64)
        for r in range(sources.shape[0]):
            s = sources[r]
            out[r, s] = 0
            head = 0
            tail = 1
            queue[0] = s
            while head < tail:
                u = queue[head]
                head += 1
                du = out[r, u] + 1
                for k in range(indptr[u], indptr[u + 1]):
                    v = indices[k]
                    if out[r, v] < 0:
                        out[r, v] = du
                        queue[tail] = v
                        tail += 1
        return out

    @njit(cache=True)
    def _dijkstra_rows_nb(weights, edges, sources):
        n = weights.shape[0]
        big = np.iinfo(np.int64).max
        out = np.full((sources.shape[0], n), -1, dtype=np.int64)
        dist = np.empty(n, dtype=np.int64)
        done = np.empty(n, dtype=np.bool_)
        for r in range(sources.shape[0]):
            dist[:] = big
            done[:] = False
            dist[sources[r]] = 0
            for _ in range(n):
                u = -1
                best = big
                for v in range(n):
                    if not done[v] and dist[v] < best:
                        best = dist[v]
                        u = v
                if u < 0:
                    break
                done[u] = True
                for v in range(n):
                    if edges[u, v] and not done[v]:
                        alt = best + weights[u, v]
                        if alt < dist[v]:
                            dist[v] = alt
            for v in range(n):
                if dist[v] != big:
                    out[r, v] = dist[v]
        return out

    @njit(cache=True)
    def _hausdorff_nb(num, finite):
        n, m = num.shape
        if n == 0:
            return 0, -1, -1, False
        if m == 0:
            return 0, 0, -1, True
        big = np.iinfo(np.int64).max
        worst = -1
        wr = -1
        wc = -1
        for i in range(n):
            best = big
            bc = -1
            for j in range(m):
                if finite[i, j] and num[i, j] < best:
                    best = num[i, j]
                    bc = j
                    if best <= worst:
                        break  # cannot raise the running max
            if bc < 0:
                return 0, i, -1, True
            if best > worst:
                worst = best
                wr = i
                wc = bc
        return worst, wr, wc, False


def bfs_rows(indptr, indices, n, sources) -> np.ndarray:
    """Hop distances from each source to every vertex (``-1`` if unreachable)."""
    sources = np.ascontiguousarray(sources, dtype=np.int64)
    if HAVE_NUMBA:
        return _bfs_rows_nb(indptr, indices, int(n), sources)
    return _bfs_rows_np(indptr, indices, int(n), sources)


def dijkstra_rows(weights, edges, sources) -> np.ndarray:
    """Weighted distances on a dense int64 weight matrix restricted to ``edges``."""
    sources = np.ascontiguousarray(sources, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=np.int64)
    edges = np.ascontiguousarray(edges, dtype=np.bool_)
    if HAVE_NUMBA:
        return _dijkstra_rows_nb(weights, edges, sources)
    return _dijkstra_rows_np(weights, edges, sources)


def directed_hausdorff(num, finite):
    """``max_i min_j num[i, j]`` over finite entries.

    Returns ``(value, row, col, unbounded)``; ``unbounded`` is set when some
    row has no finite entry (the radius is infinite). The early exit never
    changes the result.
    """
    num = np.ascontiguousarray(num, dtype=np.int64)
    finite = np.ascontiguousarray(finite, dtype=np.bool_)
    if HAVE_NUMBA:
        v, r, c, unb = _hausdorff_nb(num, finite)
    else:
        v, r, c, unb = _hausdorff_np(num, finite)
    return int(v), int(r), int(c), bool(unb)


def reference_kernels():
    """The numpy implementations, for cross-checking whichever path is active."""
    return {"bfs_rows": _bfs_rows_np, "dijkstra_rows": _dijkstra_rows_np, "directed_hausdorff": _hausdorff_np}
