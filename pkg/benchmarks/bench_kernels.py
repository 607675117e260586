"""Time the numba kernels against the numpy fallback and check they agree.

    python3 benchmarks/bench_kernels.py [--n 2048] [--repeat 3]

Inputs mirror the package's workloads: BFS over a path graph and a 2-D grid
(Rips graphs of lattice windows), dense Dijkstra on a complete graph with
log-scale weights (the shortcut metric), and directed Hausdorff on a random
integer table (covering radii).
"""

import argparse
import time

import numpy as np

from coarse_forge import kernels


def path_adj(n):
    a = np.zeros((n, n), dtype=bool)
    i = np.arange(n - 1)
    a[i, i + 1] = a[i + 1, i] = True
    return a


def grid_adj(side):
    n = side * side
    a = np.zeros((n, n), dtype=bool)
    for r in range(side):
        for c in range(side):
            k = r * side + c
            if c + 1 < side:
                a[k, k + 1] = a[k + 1, k] = True
            if r + 1 < side:
                a[k, k + side] = a[k + side, k] = True
    return a


def best_of(fn, repeat):
    out, best = None, float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2048, help="vertices for the path and complete graphs")
    ap.add_argument("--sources", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    ref = kernels.reference_kernels()
    rng = np.random.default_rng(0)
    n = args.n
    src = np.sort(rng.choice(n, size=min(args.sources, n), replace=False)).astype(np.int64)

    cases = []
    for label, adj in (("bfs path", path_adj(n)), ("bfs grid", grid_adj(int(np.sqrt(n))))):
        indptr, indices = kernels.build_csr(adj)
        m = adj.shape[0]
        s = src[src < m]
        cases.append((label, m, lambda ip=indptr, ix=indices, m=m, s=s: kernels.bfs_rows(ip, ix, m, s),
                      lambda ip=indptr, ix=indices, m=m, s=s: ref["bfs_rows"](ip, ix, m, s)))

    d = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    w = np.maximum(1, np.floor(np.log2(np.maximum(d, 1)))).astype(np.int64)
    edges = d > 0
    few = src[:4]
    cases.append(("dijkstra complete", n, lambda: kernels.dijkstra_rows(w, edges, few),
                  lambda: ref["dijkstra_rows"](w, edges, few)))

    num = rng.integers(0, 10**6, size=(n, n), dtype=np.int64)
    fin = rng.random((n, n)) < 0.9
    cases.append(("hausdorff", n, lambda: kernels.directed_hausdorff(num, fin),
                  lambda: ref["directed_hausdorff"](num, fin)))

    print(f"active backend: {kernels.BACKEND}")
    if not kernels.HAVE_NUMBA:
        print("numba unavailable or disabled (COARSE_FORGE_NO_NUMBA); both columns run numpy")
    # compile outside the timed region
    for _, _, fast, _ in cases:
        fast()
    print(f"{'kernel':<20}{'size':>7}{'active s':>12}{'numpy s':>12}{'speed-up':>10}  equal")
    all_equal = True
    for label, size, fast, slow in cases:
        a, ta = best_of(fast, args.repeat)
        b, tb = best_of(slow, args.repeat)
        # Hausdorff witnesses may differ on ties; value and unboundedness may not
        same = bool(np.array_equal(a, b)) if isinstance(a, np.ndarray) else (a[0], a[3]) == (int(b[0]), bool(b[3]))
        all_equal &= same
        print(f"{label:<20}{size:>7}{ta:>12.4f}{tb:>12.4f}{tb / max(ta, 1e-9):>10.1f}  {same}")
    if not all_equal:
        raise SystemExit("kernel outputs differ between backends")


if __name__ == "__main__":
    main()
